#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmcr/nn/adam.hpp"
#include "cmcr/nn/cm.hpp"
#include "testutil.hpp"

using namespace cmcr;
using nn::CmConfig;
using nn::CollaborationModule;

namespace {

// Eq-by-eq oracle for contrastive attention at 64 bit: explicit pointwise
// projections, per-channel scaled Gram matrix, amplification, softmax, and
// mask-weighted frequency aggregation.
struct CaOracle {
  std::vector<double> scores, x_rel, x_irr;
};

CaOracle ca_oracle(const std::vector<double>& x, int64_t b, int64_t c,
                   int64_t tn, int64_t fn, const std::vector<double>& wq,
                   const std::vector<double>& bq, const std::vector<double>& wk,
                   const std::vector<double>& bk, const std::vector<double>& amp) {
  CaOracle o;
  o.scores.assign(b * c * fn * fn, 0.0);
  o.x_rel.assign(x.size(), 0.0);
  o.x_irr.assign(x.size(), 0.0);
  std::vector<double> q(x.size()), k(x.size());
  for (int64_t s = 0; s < b; ++s)
    for (int64_t co = 0; co < c; ++co)
      for (int64_t t = 0; t < tn; ++t)
        for (int64_t f = 0; f < fn; ++f) {
          double aq = bq[co], ak = bk[co];
          for (int64_t ci = 0; ci < c; ++ci) {
            aq += wq[co * c + ci] * x[((s * c + ci) * tn + t) * fn + f];
            ak += wk[co * c + ci] * x[((s * c + ci) * tn + t) * fn + f];
          }
          q[((s * c + co) * tn + t) * fn + f] = aq;
          k[((s * c + co) * tn + t) * fn + f] = ak;
        }
  for (int64_t s = 0; s < b; ++s)
    for (int64_t ch = 0; ch < c; ++ch) {
      // S = A . (Q^T K / sqrt(T))
      std::vector<double> sm(fn * fn);
      for (int64_t i = 0; i < fn; ++i)
        for (int64_t j = 0; j < fn; ++j) {
          double acc = 0;
          for (int64_t t = 0; t < tn; ++t)
            acc += q[((s * c + ch) * tn + t) * fn + i] *
                   k[((s * c + ch) * tn + t) * fn + j];
          sm[i * fn + j] = amp[(ch * fn + i) * fn + j] * acc / std::sqrt(double(tn));
          o.scores[((s * c + ch) * fn + i) * fn + j] = sm[i * fn + j];
        }
      // row softmax -> masks -> weighted sums
      for (int64_t i = 0; i < fn; ++i) {
        double mx = sm[i * fn];
        for (int64_t j = 1; j < fn; ++j) mx = std::max(mx, sm[i * fn + j]);
        double z = 0;
        std::vector<double> mrow(fn);
        for (int64_t j = 0; j < fn; ++j) {
          mrow[j] = std::exp(sm[i * fn + j] - mx);
          z += mrow[j];
        }
        for (int64_t j = 0; j < fn; ++j) mrow[j] /= z;
        for (int64_t t = 0; t < tn; ++t) {
          double rel = 0, irr = 0;
          for (int64_t j = 0; j < fn; ++j) {
            rel += mrow[j] * x[((s * c + ch) * tn + t) * fn + j];
            irr += (1.0 - mrow[j]) / double(fn - 1) *
                   x[((s * c + ch) * tn + t) * fn + j];
          }
          o.x_rel[((s * c + ch) * tn + t) * fn + i] = rel;
          o.x_irr[((s * c + ch) * tn + t) * fn + i] = irr;
        }
      }
    }
  return o;
}

// Independent sorted-window loss oracle.
double loss_oracle(const std::vector<double>& scores, int64_t rows, int64_t fn,
                   const CmConfig& cfg) {
  const int k = cfg.top_k(fn), m = cfg.irr_start(fn);
  double acc = 0;
  for (int64_t r = 0; r < rows; ++r) {
    std::vector<double> row(scores.begin() + r * fn, scores.begin() + (r + 1) * fn);
    std::sort(row.begin(), row.end(), std::greater<double>());
    double top = 0, irr = 0;
    for (int i = 0; i < k; ++i) top += std::exp(row[i]);
    for (int i = m; i < m + k; ++i) irr += std::exp(row[i]);
    acc += -std::log(top / irr);
  }
  return acc / double(rows) + cfg.reg_const;
}

void make_identity_projection(nn::PointwiseConv<float>& p, int c) {
  std::fill(p.w.data().begin(), p.w.data().end(), 0.0f);
  for (int i = 0; i < c; ++i) p.w.data()[i * c + i] = 1.0f;
  std::fill(p.bias.data().begin(), p.bias.data().end(), 0.0f);
}

}  // namespace

TEST_CASE("mask invariants: rows sum to 1, M_i = 1 - M_r, M_i in [0,1]") {
  CollaborationModule<float> cm;
  cm.init("cm", 3, 4, 6);
  auto x = Tensor<float>::from({2, 4, 5, 6}, testutil::random_vecf(2 * 4 * 5 * 6, 7));
  cm.contrastive_attention(x);
  const int64_t f = 6;
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < f; ++i) {
      float sum = 0;
      for (int64_t j = 0; j < f; ++j) {
        const float mr = cm.last_m_rel[(c * f + i) * f + j];
        const float mi = cm.last_m_irr[(c * f + i) * f + j];
        sum += mr;
        CHECK(mi == 1.0f - mr);  // exact elementwise complement
        CHECK(mi >= 0.0f);
        CHECK(mi <= 1.0f);
      }
      CHECK(std::abs(sum - 1.0f) <= 1e-6f);
    }
}

TEST_CASE("self-similar input: diagonal-dominant scores") {
  CollaborationModule<float> cm;
  cm.init("cm", 5, 2, 4);
  make_identity_projection(cm.q_proj, 2);
  make_identity_projection(cm.k_proj, 2);

  // orthonormal frequency columns: x[., c, t, f] = 1 if t == f
  std::vector<float> xv(2 * 5 * 4, 0.0f);
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t f = 0; f < 4; ++f) xv[(c * 5 + f) * 4 + f] = 1.0f;
  cm.contrastive_attention(Tensor<float>::from({1, 2, 5, 4}, xv));

  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 4; ++i) {
      int argmax = 0;
      float best = -1e30f;
      for (int64_t j = 0; j < 4; ++j) {
        const float v = cm.last_m_rel[(c * 4 + i) * 4 + j];
        if (v > best) {
          best = v;
          argmax = static_cast<int>(j);
        }
      }
      CHECK(argmax == i);
      CHECK(cm.last_scores[(c * 4 + i) * 4 + i] >
            cm.last_scores[(c * 4 + i) * 4 + (i + 1) % 4]);
    }
}

TEST_CASE("constant input: uniform masks all equal to 1/F, x_rel == x_irr") {
  CollaborationModule<float> cm;
  cm.init("cm", 9, 2, 5);
  auto x = Tensor<float>::full({1, 2, 3, 5}, 0.7f);
  auto sep = cm.contrastive_attention(x);
  for (float v : cm.last_m_rel) CHECK(v == doctest::Approx(0.2f).epsilon(1e-6));
  for (int64_t i = 0; i < sep.x_rel.numel(); ++i) {
    CHECK(sep.x_rel.data()[i] == doctest::Approx(0.7f).epsilon(1e-5));
    CHECK(sep.x_irr.data()[i] == doctest::Approx(sep.x_rel.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("contrastive attention matches the 64-bit oracle on 1x2x3x4") {
  CollaborationModule<double> cm;
  cm.init("cm", 13, 2, 4);
  // give the amplification some structure
  auto ampv = testutil::random_vec(2 * 4 * 4, 55, 0.5, 1.5);
  std::copy(ampv.begin(), ampv.end(), cm.amplification.data().begin());

  auto xv = testutil::random_vec(1 * 2 * 3 * 4, 56);
  auto sep = cm.contrastive_attention(Tensor<double>::from({1, 2, 3, 4}, xv));

  std::vector<double> wq(cm.q_proj.w.data().begin(), cm.q_proj.w.data().end());
  std::vector<double> bq(cm.q_proj.bias.data().begin(), cm.q_proj.bias.data().end());
  std::vector<double> wk(cm.k_proj.w.data().begin(), cm.k_proj.w.data().end());
  std::vector<double> bk(cm.k_proj.bias.data().begin(), cm.k_proj.bias.data().end());
  auto ref = ca_oracle(xv, 1, 2, 3, 4, wq, bq, wk, bk, ampv);

  double worst = 0;
  for (size_t i = 0; i < ref.scores.size(); ++i)
    worst = std::max(worst, std::abs(sep.scores.data()[i] - ref.scores[i]));
  for (size_t i = 0; i < ref.x_rel.size(); ++i) {
    worst = std::max(worst, std::abs(sep.x_rel.data()[i] - ref.x_rel[i]));
    worst = std::max(worst, std::abs(sep.x_irr.data()[i] - ref.x_irr[i]));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("attention rejects a single frequency bin") {
  CollaborationModule<float> cm;
  CHECK_THROWS_WITH_AS(cm.init("cm", 1, 2, 1), doctest::Contains("degenerate"),
                       std::runtime_error);
}

TEST_CASE("contrastive loss") {
  CmConfig cfg;

  SUBCASE("constant scores give exactly r") {
    auto s = Tensor<double>::full({3, 8, 8}, 1.7);
    CHECK(contrastive_loss(s, cfg).item() == 0.0);
    cfg.reg_const = 5.0;
    CHECK(contrastive_loss(s, cfg).item() == 5.0);
  }

  SUBCASE("hand-computed descending row at F_h = 16") {
    // k = ceil(0.08*16) = 2, m = floor(0.16*16) = 2:
    // -log((e^4 + e^3) / (e^2 + e^1)) = -2
    CHECK(cfg.top_k(16) == 2);
    CHECK(cfg.irr_start(16) == 2);
    std::vector<double> row(16);
    for (int j = 0; j < 16; ++j) row[j] = 4.0 - j;
    std::vector<double> sv;
    for (int i = 0; i < 16; ++i) sv.insert(sv.end(), row.begin(), row.end());
    auto loss = contrastive_loss(Tensor<double>::from({1, 16, 16}, sv), cfg);
    CHECK(std::abs(loss.item() - (-2.0)) < 1e-9);

    cfg.reg_const = 0.5;
    auto loss2 = contrastive_loss(Tensor<double>::from({1, 16, 16}, sv), cfg);
    CHECK(std::abs(loss2.item() - (-1.5)) < 1e-9);
    cfg.reg_const = 0.0;
  }

  SUBCASE("random scores match the independent oracle") {
    auto sv = testutil::random_vec(2 * 16 * 16, 77, -2.0, 2.0);
    auto loss = contrastive_loss(Tensor<double>::from({2, 16, 16}, sv), cfg);
    CHECK(loss.item() == doctest::Approx(loss_oracle(sv, 2 * 16, 16, cfg)).epsilon(1e-12));
  }

  SUBCASE("window overflow is rejected with an explicit message") {
    CmConfig bad;
    bad.n_irr_start = 0.95;
    auto s = Tensor<double>::full({1, 16, 16}, 0.0);
    CHECK_THROWS_WITH_AS(static_cast<void>(contrastive_loss(s, bad)),
                         doctest::Contains("overflows"), std::runtime_error);
  }

  SUBCASE("gradient through the sorted windows") {
    std::vector<Tensor<double>> leaves = {
        Tensor<double>::from({2, 5, 5}, testutil::random_vec(50, 31))};
    auto r = testutil::grad_check(leaves, [&] {
      CmConfig c5;  // F=5: k = 1, m = 0 -> windows [0,1) and [0,1)... widen
      c5.n_rel = 0.2;
      c5.n_irr_start = 0.4;
      return contrastive_loss(leaves[0], c5);
    });
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("interactive attention: residual identity at init") {
  CollaborationModule<float> cm;
  cm.init("cm", 21, 4, 6);
  auto x = Tensor<float>::from({2, 4, 3, 6}, testutil::random_vecf(2 * 4 * 3 * 6, 5));
  auto zero = Tensor<float>::zeros({2, 4, 3, 6});
  // zero-init DSC pointwise is the output projection: Y == X exactly
  auto y = cm.interactive_attention(x, zero, zero);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  // also holds with nonzero separated features while the projection is zero
  auto sep = cm.contrastive_attention(x);
  auto y2 = cm.interactive_attention(x, sep.x_rel, sep.x_irr);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y2.data()[i] == x.data()[i]);
}

TEST_CASE("cm forward: shape contract and stacking") {
  CmConfig cfg;
  for (auto [tn, fn] : {std::pair<int64_t, int64_t>{7, 17}, {3, 9}}) {
    CollaborationModule<float> cm;
    cm.init("cm", 31, 6, static_cast<int>(fn));
    auto x = Tensor<float>::from({2, 6, tn, fn},
                                 testutil::random_vecf(2 * 6 * tn * fn, 8));
    auto [y, loss] = cm.forward(x, cfg);
    CHECK(y.shape() == x.shape());
    CHECK(loss.numel() == 1);
  }

  // three stacked modules preserve shape; constant features give loss == r
  CmConfig cfg5;
  cfg5.reg_const = 5.0;
  std::vector<CollaborationModule<float>> stack(3);
  for (int i = 0; i < 3; ++i) stack[i].init("s" + std::to_string(i), 40 + i, 4, 8);
  auto x = Tensor<float>::full({1, 4, 5, 8}, 0.31f);
  auto cur = x;
  float loss_sum = 0;
  for (auto& cm : stack) {
    auto [y, l] = cm.forward(cur, cfg5);
    cur = y;
    loss_sum += l.item();
  }
  CHECK(cur.shape() == x.shape());
  CHECK(loss_sum / 3.0f == 5.0f);
}

TEST_CASE("cm forward is permutation-equivariant over the batch") {
  CollaborationModule<float> cm;
  cm.init("cm", 77, 3, 5);
  // break the zero-init so the module actually transforms
  auto pwv = testutil::random_vecf(cm.dsc.pw.w.numel(), 9, -0.3f, 0.3f);
  std::copy(pwv.begin(), pwv.end(), cm.dsc.pw.w.data().begin());

  auto a = testutil::random_vecf(3 * 4 * 5, 10);
  auto b = testutil::random_vecf(3 * 4 * 5, 11);
  std::vector<float> ab(a), ba(b);
  ab.insert(ab.end(), b.begin(), b.end());
  ba.insert(ba.end(), a.begin(), a.end());
  CmConfig cfg;
  auto [y1, l1] = cm.forward(Tensor<float>::from({2, 3, 4, 5}, ab), cfg);
  auto [y2, l2] = cm.forward(Tensor<float>::from({2, 3, 4, 5}, ba), cfg);
  const int64_t half = 3 * 4 * 5;
  for (int64_t i = 0; i < half; ++i) {
    CHECK(y1.data()[i] == y2.data()[half + i]);
    CHECK(y1.data()[half + i] == y2.data()[i]);
  }
  CHECK(l1.item() == doctest::Approx(l2.item()).epsilon(1e-6));
}

TEST_CASE("gradient checks through the module") {
  std::mt19937_64 rng(71);

  SUBCASE("interactive attention block on 1x2x3x4") {
    CollaborationModule<double> cm;
    cm.init("g", 81, 2, 4);
    auto pwv = testutil::random_vec(cm.dsc.pw.w.numel(), 12, -0.4, 0.4);
    std::copy(pwv.begin(), pwv.end(), cm.dsc.pw.w.data().begin());
    std::vector<Tensor<double>> leaves = {Tensor<double>::randn({1, 2, 3, 4}, rng),
                                          cm.iq_proj.w, cm.ik_proj.w, cm.dsc.dw,
                                          cm.dsc.pw.w, cm.chan_attn.w1,
                                          cm.chan_attn.w2};
    auto r = testutil::grad_check(leaves, [&] {
      auto sep = cm.contrastive_attention(leaves[0]);
      auto y = cm.interactive_attention(leaves[0], sep.x_rel, sep.x_irr);
      return mean_all(mul(y, y));
    });
    CHECK(r.max_rel_err < 1e-6);
  }

  SUBCASE("full module including the contrastive loss") {
    CollaborationModule<double> cm;
    cm.init("g2", 83, 2, 4);
    CmConfig cfg;
    cfg.n_rel = 0.3;  // k=2, m=1 on F=4
    cfg.n_irr_start = 0.3;
    std::vector<Tensor<double>> leaves = {Tensor<double>::randn({1, 2, 3, 4}, rng),
                                          cm.amplification, cm.q_proj.w, cm.k_proj.w};
    auto r = testutil::grad_check(leaves, [&] {
      auto [y, l] = cm.forward(leaves[0], cfg);
      return add(mean_all(mul(y, y)), l);
    });
    CHECK(r.max_rel_err < 1e-6);
  }

  SUBCASE("three stacked modules end to end") {
    std::vector<CollaborationModule<double>> stack(3);
    for (int i = 0; i < 3; ++i) {
      stack[i].init("st" + std::to_string(i), 90 + i, 2, 4);
      auto pwv = testutil::random_vec(stack[i].dsc.pw.w.numel(), 13 + i, -0.3, 0.3);
      std::copy(pwv.begin(), pwv.end(), stack[i].dsc.pw.w.data().begin());
    }
    CmConfig cfg;
    cfg.n_rel = 0.3;
    cfg.n_irr_start = 0.3;
    std::vector<Tensor<double>> leaves = {Tensor<double>::randn({1, 2, 3, 4}, rng),
                                          stack[0].amplification,
                                          stack[1].q_proj.w, stack[2].dsc.pw.w};
    auto r = testutil::grad_check(leaves, [&] {
      auto cur = leaves[0];
      Tensor<double> acc = Tensor<double>::scalar(0.0);
      for (auto& cm : stack) {
        auto [y, l] = cm.forward(cur, cfg);
        cur = y;
        acc = add(acc, l);
      }
      return add(mean_all(mul(cur, cur)), mul_scalar(acc, 1.0 / 3.0));
    });
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("optimizing the loss on A widens every row's score gap") {
  const int C = 4, F = 16;
  CmConfig cfg;  // k=2, m=2
  std::mt19937_64 rng(2024);
  auto base = Tensor<double>::randn({C, F, F}, rng);
  auto amp = Tensor<double>::full({C, F, F}, 1.0).set_requires_grad();

  auto row_gaps = [&](const Tensor<double>& a) {
    std::vector<double> gaps;
    const int k = cfg.top_k(F), m = cfg.irr_start(F);
    for (int64_t r = 0; r < C * F; ++r) {
      std::vector<double> row(F);
      for (int j = 0; j < F; ++j)
        row[size_t(j)] = a.data()[r * F + j] * base.data()[r * F + j];
      std::sort(row.begin(), row.end(), std::greater<double>());
      double top = 0, irr = 0;
      for (int i = 0; i < k; ++i) top += row[size_t(i)];
      for (int i = m; i < m + k; ++i) irr += row[size_t(i)];
      gaps.push_back(top / k - irr / k);
    }
    return gaps;
  };

  auto gaps0 = row_gaps(amp);
  Adam<double> opt({amp}, 1e-3);
  for (int step = 0; step < 100; ++step) {
    auto loss = contrastive_loss(mul(amp, base), cfg);
    backward(loss);
    opt.step();
  }
  auto gaps1 = row_gaps(amp);
  for (size_t r = 0; r < gaps0.size(); ++r) CHECK(gaps1[r] > gaps0[r]);
}

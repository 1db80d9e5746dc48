// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/nn/layers.hpp"

// Collaboration module: contrastive attention splits bottleneck features into
// speech-relevant and speech-irrelevant aggregates over the frequency axis;
// interactive attention recombines them. Scores per channel are
//   S_c = A_c . (Q_c^T K_c / sqrt(T_h)),  A learnable, ones at init,
// so an untrained module scores exactly like plain scaled self-attention.

namespace cmcr::nn {

struct CmConfig {
  double n_rel = 0.08;        // fraction of sorted scores treated as relevant
  double n_irr_start = 0.16;  // start fraction of the irrelevant window
  double reg_const = 0.0;     // additive constant of the score-contrast loss
  int num_cm = 3;

  // Window indices on a sorted row of length f_h; both windows span k
  // entries, the irrelevant one starting at m.
  int top_k(int64_t f_h) const {
    return std::max<int>(1, static_cast<int>(std::ceil(n_rel * static_cast<double>(f_h))));
  }
  int irr_start(int64_t f_h) const {
    return static_cast<int>(std::floor(n_irr_start * static_cast<double>(f_h)));
  }
};

// Mean over rows, channels (and batch) of
//   -log( sum_{top k} exp(S'_ij) / sum_{j in [m, m+k)} exp(S'_ij) ) + r
// with S' the descending row sort. Evaluated as a difference of
// log-sum-exps, so constant rows give exactly r.
template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& scores, const CmConfig& cfg) {
  const Shape& sh = scores.shape();
  require(sh.size() >= 2, "contrastive_loss: expected [..., F, F] scores");
  const int64_t f_h = sh.back();
  const int k = cfg.top_k(f_h);
  const int m = cfg.irr_start(f_h);
  require(m + k <= f_h,
          str_cat("contrastive_loss: irrelevant window [", m, ",", m + k,
                  ") overflows the ", f_h,
                  " sorted scores; lower n_rel/n_irr_start"));
  auto sorted = sort_rows_desc(scores);
  auto top = narrow(sorted, sh.size() - 1, 0, k);
  auto irr = narrow(sorted, sh.size() - 1, m, k);
  auto per_row = sub(logsumexp_rows(irr), logsumexp_rows(top));
  return add_scalar(mean_all(per_row), static_cast<T>(cfg.reg_const));
}

template <class T>
struct CollaborationModule {
  int channels = 0;
  int f_h = 0;
  PointwiseConv<T> q_proj, k_proj;    // contrastive attention
  Tensor<T> amplification;            // A: [C, F_h, F_h]
  PointwiseConv<T> iq_proj, ik_proj;  // interactive attention
  DepthwiseSeparableConv<T> dsc;      // 2C -> C, zero-init pointwise
  ChannelAttention<T> chan_attn;

  // Diagnostic snapshots of batch item 0, written on every forward.
  std::vector<T> last_scores, last_m_rel, last_m_irr;

  void init(const std::string& name, uint64_t seed, int c, int f_bins,
            int ca_reduction = 4) {
    require(f_bins >= 2, "collaboration module: attention over a single "
                         "frequency bin is degenerate (F_h = 1)");
    channels = c;
    f_h = f_bins;
    q_proj.init(name + ".q", seed, c, c);
    k_proj.init(name + ".k", seed, c, c);
    amplification = param_const<T>({c, f_bins, f_bins}, T(1));
    iq_proj.init(name + ".iq", seed, c, c);
    ik_proj.init(name + ".ik", seed, c, c);
    dsc.init(name + ".dsc", seed, 2 * c, c, /*zero_init_pointwise=*/true);
    chan_attn.init(name + ".ca", seed, c, ca_reduction);
  }

  struct Separated {
    Tensor<T> x_rel, x_irr, scores;
  };

  Separated contrastive_attention(const Tensor<T>& x) {
    const Shape& sh = x.shape();
    require(sh.size() == 4 && sh[1] == channels && sh[3] == f_h,
            "contrastive_attention: expected [B," + std::to_string(channels) +
                ",T," + std::to_string(f_h) + "], got " + shape_str(sh));
    require(f_h >= 2, "contrastive_attention: F_h must be >= 2");
    const int64_t b = sh[0], t_h = sh[2];

    auto q = reshape(q_proj.forward(x), {b * channels, t_h, f_h});
    auto k = reshape(k_proj.forward(x), {b * channels, t_h, f_h});
    auto qk = mul_scalar(bmm(q, k, true, false),
                         static_cast<T>(1.0 / std::sqrt(static_cast<double>(t_h))));
    auto scores =
        mul_bcast0(reshape(qk, {b, channels, f_h, f_h}), amplification);

    auto m_rel = softmax_rows(scores);
    auto m_irr = add_scalar(mul_scalar(m_rel, T(-1)), T(1));

    auto xr = reshape(x, {b * channels, t_h, f_h});
    auto mr = reshape(m_rel, {b * channels, f_h, f_h});
    auto mi = reshape(m_irr, {b * channels, f_h, f_h});
    auto x_rel = reshape(bmm(xr, mr, false, true), sh);
    auto x_irr = mul_scalar(reshape(bmm(xr, mi, false, true), sh),
                            static_cast<T>(1.0 / static_cast<double>(f_h - 1)));

    snapshot(scores, m_rel, m_irr);
    return {x_rel, x_irr, scores};
  }

  Tensor<T> interactive_attention(const Tensor<T>& x, const Tensor<T>& x_rel,
                                  const Tensor<T>& x_irr) {
    require(x.shape() == x_rel.shape() && x.shape() == x_irr.shape(),
            "interactive_attention: inputs must be shape-identical");
    const Shape& sh = x.shape();
    const int64_t b = sh[0], t_h = sh[2];

    // cross-attention: queries from the original features, keys/values from
    // the irrelevant aggregate
    auto q = reshape(iq_proj.forward(x), {b * channels, t_h, f_h});
    auto k = reshape(ik_proj.forward(x_irr), {b * channels, t_h, f_h});
    auto attn = softmax_rows(mul_scalar(
        bmm(q, k, true, false),
        static_cast<T>(1.0 / std::sqrt(static_cast<double>(t_h)))));
    auto z = reshape(
        bmm(reshape(x_irr, {b * channels, t_h, f_h}), attn, false, true), sh);

    auto fused = dsc.forward(concat<T>({z, x_rel}, 1));
    return add(x, chan_attn.forward(fused));
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x, const CmConfig& cfg) {
    auto sep = contrastive_attention(x);
    auto loss = contrastive_loss(sep.scores, cfg);
    auto y = interactive_attention(x, sep.x_rel, sep.x_irr);
    return {y, loss};
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    q_proj.collect(out, prefix + ".q");
    k_proj.collect(out, prefix + ".k");
    out.push_back({prefix + ".amplification", amplification});
    iq_proj.collect(out, prefix + ".iq");
    ik_proj.collect(out, prefix + ".ik");
    dsc.collect(out, prefix + ".dsc");
    chan_attn.collect(out, prefix + ".ca");
  }

 private:
  void snapshot(const Tensor<T>& scores, const Tensor<T>& m_rel,
                const Tensor<T>& m_irr) {
    const size_t n = static_cast<size_t>(channels) * f_h * f_h;
    last_scores.assign(scores.data().begin(), scores.data().begin() + n);
    last_m_rel.assign(m_rel.data().begin(), m_rel.data().begin() + n);
    last_m_irr.assign(m_irr.data().begin(), m_irr.data().begin() + n);
  }
};

}  // namespace cmcr::nn

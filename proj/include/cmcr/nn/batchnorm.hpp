// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/autograd/ops.hpp"

namespace cmcr::nn {

// Per-channel batch normalization over [B, C, T, F]. Training mode uses batch
// statistics (biased variance) and updates the running averages in place;
// eval mode normalizes with the running statistics. Gradients flow through
// the batch statistics.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, std::vector<T>& run_mean,
                     std::vector<T>& run_var, bool training,
                     T momentum = static_cast<T>(0.9),
                     T eps = static_cast<T>(1e-5)) {
  const Shape& xs = x.shape();
  require(xs.size() == 4, "batch_norm: expected [B,C,T,F]");
  const int64_t b = xs[0], c = xs[1], inner = xs[2] * xs[3];
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
          "batch_norm: affine parameter shape mismatch");
  require(static_cast<int64_t>(run_mean.size()) == c &&
              static_cast<int64_t>(run_var.size()) == c,
          "batch_norm: running stats shape mismatch");

  auto sx = x.storage(), sg = gamma.storage(), sb = beta.storage();
  const int64_t n = b * inner;

  auto mean = std::make_shared<std::vector<T>>(c, T(0));
  auto istd = std::make_shared<std::vector<T>>(c, T(0));
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int64_t s = 0; s < b; ++s)
        acc += kern::sum(sx->v.data() + (s * c + ch) * inner,
                         static_cast<size_t>(inner));
      (*mean)[ch] = static_cast<T>(acc / static_cast<double>(n));
      double var = 0.0;
      for (int64_t s = 0; s < b; ++s) {
        const T* p = sx->v.data() + (s * c + ch) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          const double d = p[i] - (*mean)[ch];
          var += d * d;
        }
      }
      const T v = static_cast<T>(var / static_cast<double>(n));
      (*istd)[ch] = T(1) / std::sqrt(v + eps);
      run_mean[ch] = momentum * run_mean[ch] + (T(1) - momentum) * (*mean)[ch];
      run_var[ch] = momentum * run_var[ch] + (T(1) - momentum) * v;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      (*mean)[ch] = run_mean[ch];
      (*istd)[ch] = T(1) / std::sqrt(run_var[ch] + eps);
    }
  }

  auto out = make_op_output<T>(
      xs, {sx, sg, sb},
      [sx, sg, sb, mean, istd, b, c, inner, n, training](Storage<T>& o) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const T mu = (*mean)[ch], is = (*istd)[ch], gam = sg->v[ch];
          // per-channel reductions over (B, T, F)
          double sum_go = 0.0, sum_goxh = 0.0;
          for (int64_t s = 0; s < b; ++s) {
            const T* go = o.g.data() + (s * c + ch) * inner;
            const T* xv = sx->v.data() + (s * c + ch) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              sum_go += go[i];
              sum_goxh += go[i] * (xv[i] - mu) * is;
            }
          }
          if (sg->requires_grad) {
            sg->ensure_grad();
            sg->g[ch] += static_cast<T>(sum_goxh);
          }
          if (sb->requires_grad) {
            sb->ensure_grad();
            sb->g[ch] += static_cast<T>(sum_go);
          }
          if (sx->requires_grad) {
            sx->ensure_grad();
            const T m_go = static_cast<T>(sum_go / n);
            const T m_goxh = static_cast<T>(sum_goxh / n);
            for (int64_t s = 0; s < b; ++s) {
              const T* go = o.g.data() + (s * c + ch) * inner;
              const T* xv = sx->v.data() + (s * c + ch) * inner;
              T* gx = sx->g.data() + (s * c + ch) * inner;
              if (training) {
                for (int64_t i = 0; i < inner; ++i) {
                  const T xh = (xv[i] - mu) * is;
                  gx[i] += gam * is * (go[i] - m_go - xh * m_goxh);
                }
              } else {
                for (int64_t i = 0; i < inner; ++i) gx[i] += gam * is * go[i];
              }
            }
          }
        }
      });

  for (int64_t s = 0; s < b; ++s)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T mu = (*mean)[ch], is = (*istd)[ch];
      const T gam = sg->v[ch], bet = sb->v[ch];
      const T* xv = sx->v.data() + (s * c + ch) * inner;
      T* ov = out.data().data() + (s * c + ch) * inner;
      for (int64_t i = 0; i < inner; ++i) ov[i] = gam * (xv[i] - mu) * is + bet;
    }
  return out;
}

}  // namespace cmcr::nn

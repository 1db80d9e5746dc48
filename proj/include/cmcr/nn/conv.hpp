// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/autograd/ops.hpp"

// 2-D convolution over [B, C, T, F] maps, lowered to GEMM via im2col.
// conv_transpose2d is the exact adjoint of conv2d under the same geometry,
// so decoder stages restore their matched encoder stage's input shape.

namespace cmcr::nn {

struct ConvGeom {
  int kt = 2, kf = 3;
  int stride_t = 1, stride_f = 1;
  int pad_t0 = 1, pad_t1 = 0;  // causal: all time padding on the left
  int pad_f0 = 1, pad_f1 = 1;

  int64_t out_t(int64_t t) const { return (t + pad_t0 + pad_t1 - kt) / stride_t + 1; }
  int64_t out_f(int64_t f) const { return (f + pad_f0 + pad_f1 - kf) / stride_f + 1; }
};

namespace detail {

template <class T>
void im2col(const T* x, int64_t c_in, int64_t t_in, int64_t f_in,
            const ConvGeom& g, int64_t ot, int64_t of, T* col) {
  const int64_t n_sp = ot * of;
  for (int64_t c = 0; c < c_in; ++c)
    for (int dt = 0; dt < g.kt; ++dt)
      for (int df = 0; df < g.kf; ++df) {
        T* row = col + ((c * g.kt + dt) * g.kf + df) * n_sp;
        for (int64_t t = 0; t < ot; ++t) {
          const int64_t ti = t * g.stride_t + dt - g.pad_t0;
          T* dst = row + t * of;
          if (ti < 0 || ti >= t_in) {
            std::fill(dst, dst + of, T(0));
            continue;
          }
          const T* src = x + (c * t_in + ti) * f_in;
          for (int64_t f = 0; f < of; ++f) {
            const int64_t fi = f * g.stride_f + df - g.pad_f0;
            dst[f] = (fi >= 0 && fi < f_in) ? src[fi] : T(0);
          }
        }
      }
}

// Adjoint of im2col: scatter-add columns back into the input layout.
template <class T>
void col2im_add(const T* col, int64_t c_in, int64_t t_in, int64_t f_in,
                const ConvGeom& g, int64_t ot, int64_t of, T* x) {
  const int64_t n_sp = ot * of;
  for (int64_t c = 0; c < c_in; ++c)
    for (int dt = 0; dt < g.kt; ++dt)
      for (int df = 0; df < g.kf; ++df) {
        const T* row = col + ((c * g.kt + dt) * g.kf + df) * n_sp;
        for (int64_t t = 0; t < ot; ++t) {
          const int64_t ti = t * g.stride_t + dt - g.pad_t0;
          if (ti < 0 || ti >= t_in) continue;
          T* dst = x + (c * t_in + ti) * f_in;
          const T* src = row + t * of;
          for (int64_t f = 0; f < of; ++f) {
            const int64_t fi = f * g.stride_f + df - g.pad_f0;
            if (fi >= 0 && fi < f_in) dst[fi] += src[f];
          }
        }
      }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4, "conv2d: expected 4-D input and kernel");
  require(xs[1] == ws[1], "conv2d: channel mismatch " + shape_str(xs) + " vs " +
                              shape_str(ws));
  require(ws[2] == g.kt && ws[3] == g.kf, "conv2d: kernel shape disagrees with geometry");
  const int64_t b = xs[0], ci = xs[1], ti = xs[2], fi = xs[3];
  const int64_t co = ws[0];
  const int64_t ot = g.out_t(ti), of = g.out_f(fi);
  require(ot >= 1 && of >= 1, "conv2d: input " + shape_str(xs) + " too small for kernel");
  const int64_t k = ci * g.kt * g.kf;
  const int64_t n_sp = ot * of;

  auto sx = x.storage(), sw = w.storage();
  auto out = make_op_output<T>(
      Shape{b, co, ot, of}, {sx, sw},
      [sx, sw, g, b, ci, ti, fi, co, ot, of, k, n_sp](Storage<T>& o) {
        std::vector<T> col(static_cast<size_t>(k) * n_sp);
        std::vector<T> colT;
        std::vector<T> wT;
        std::vector<T> gcol;
        if (sw->requires_grad) sw->ensure_grad();
        if (sx->requires_grad) {
          sx->ensure_grad();
          wT.resize(static_cast<size_t>(k) * co);
          cmcr::detail::transpose2d(sw->v.data(), co, k, wT.data());
          gcol.resize(static_cast<size_t>(k) * n_sp);
        }
        for (int64_t s = 0; s < b; ++s) {
          const T* go = o.g.data() + s * co * n_sp;
          if (sw->requires_grad) {
            detail::im2col(sx->v.data() + s * ci * ti * fi, ci, ti, fi, g, ot, of,
                           col.data());
            colT.resize(static_cast<size_t>(n_sp) * k);
            cmcr::detail::transpose2d(col.data(), k, n_sp, colT.data());
            kern::gemm(co, k, n_sp, go, n_sp, colT.data(), k, true,
                       sw->g.data(), k);
          }
          if (sx->requires_grad) {
            kern::gemm(k, n_sp, co, wT.data(), co, go, n_sp, false,
                       gcol.data(), n_sp);
            detail::col2im_add(gcol.data(), ci, ti, fi, g, ot, of,
                               sx->g.data() + s * ci * ti * fi);
          }
        }
      });

  std::vector<T> col(static_cast<size_t>(k) * n_sp);
  for (int64_t s = 0; s < b; ++s) {
    detail::im2col(sx->v.data() + s * ci * ti * fi, ci, ti, fi, g, ot, of,
                   col.data());
    kern::gemm(co, n_sp, k, sw->v.data(), k, col.data(), n_sp, false,
               out.data().data() + s * co * n_sp, n_sp);
  }
  return out;
}

// Adjoint of conv2d with geometry g: maps [B, C_in, T_in, F_in] back to the
// conv's input space [B, C_out, out_t, out_f]. w: [C_in, C_out, kt, kf].
// out_t/out_f select the preimage shape (stride-2 maps are not injective).
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                           const ConvGeom& g, int64_t out_t, int64_t out_f) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4,
          "conv_transpose2d: expected 4-D input and kernel");
  require(xs[1] == ws[0], "conv_transpose2d: channel mismatch " + shape_str(xs) +
                              " vs " + shape_str(ws));
  require(ws[2] == g.kt && ws[3] == g.kf,
          "conv_transpose2d: kernel shape disagrees with geometry");
  require(g.out_t(out_t) == xs[2] && g.out_f(out_f) == xs[3],
          "conv_transpose2d: requested output " + std::to_string(out_t) + "x" +
              std::to_string(out_f) + " does not map to input " + shape_str(xs));
  const int64_t b = xs[0], ci = xs[1], ti = xs[2], fi = xs[3];
  const int64_t co = ws[1];
  const int64_t k = co * g.kt * g.kf;
  const int64_t n_sp = ti * fi;

  auto sx = x.storage(), sw = w.storage();
  auto out = make_op_output<T>(
      Shape{b, co, out_t, out_f}, {sx, sw},
      [sx, sw, g, b, ci, ti, fi, co, out_t, out_f, k, n_sp](Storage<T>& o) {
        std::vector<T> gcol(static_cast<size_t>(k) * n_sp);
        std::vector<T> gcolT;
        if (sw->requires_grad) sw->ensure_grad();
        if (sx->requires_grad) sx->ensure_grad();
        for (int64_t s = 0; s < b; ++s) {
          detail::im2col(o.g.data() + s * co * out_t * out_f, co, out_t, out_f,
                         g, ti, fi, gcol.data());
          if (sx->requires_grad)
            kern::gemm(ci, n_sp, k, sw->v.data(), k, gcol.data(), n_sp, true,
                       sx->g.data() + s * ci * n_sp, n_sp);
          if (sw->requires_grad) {
            gcolT.resize(static_cast<size_t>(n_sp) * k);
            cmcr::detail::transpose2d(gcol.data(), k, n_sp, gcolT.data());
            kern::gemm(ci, k, n_sp, sx->v.data() + s * ci * n_sp, n_sp,
                       gcolT.data(), k, true, sw->g.data(), k);
          }
        }
      });

  std::vector<T> wT(static_cast<size_t>(k) * ci);
  cmcr::detail::transpose2d(sw->v.data(), ci, k, wT.data());
  std::vector<T> prod(static_cast<size_t>(k) * n_sp);
  std::fill(out.data().begin(), out.data().end(), T(0));
  for (int64_t s = 0; s < b; ++s) {
    kern::gemm(k, n_sp, ci, wT.data(), ci, sx->v.data() + s * ci * n_sp, n_sp,
               false, prod.data(), n_sp);
    detail::col2im_add(prod.data(), co, out_t, out_f, g, ti, fi,
                       out.data().data() + s * co * out_t * out_f);
  }
  return out;
}

// Per-channel 3x3 convolution, stride 1, same padding.
template <class T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 3 && ws[0] == xs[1],
          "depthwise_conv2d: expected x [B,C,T,F], w [C,kt,kf]");
  const int64_t b = xs[0], c = xs[1], tn = xs[2], fn = xs[3];
  const int kt = static_cast<int>(ws[1]), kf = static_cast<int>(ws[2]);
  require(kt % 2 == 1 && kf % 2 == 1, "depthwise_conv2d: odd kernel expected");
  const int pt = kt / 2, pf = kf / 2;

  auto sx = x.storage(), sw = w.storage();
  auto run = [=](const T* src, const T* ker, T* dst, bool transposed_scatter,
                 T* gker, const T* other) {
    // transposed_scatter=false: dst += conv(src, ker)
    // transposed_scatter=true : dst += corr-scatter (adjoint); gker from (src, other)
    for (int64_t s = 0; s < b; ++s)
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* xp = src + (s * c + ch) * tn * fn;
        T* op = dst ? dst + (s * c + ch) * tn * fn : nullptr;
        const T* gp = other ? other + (s * c + ch) * tn * fn : nullptr;
        for (int64_t t = 0; t < tn; ++t)
          for (int dt = 0; dt < kt; ++dt) {
            const int64_t ti = t + dt - pt;
            if (ti < 0 || ti >= tn) continue;
            for (int df = 0; df < kf; ++df) {
              const int64_t off = df - pf;
              const int64_t f_lo = std::max<int64_t>(0, -off);
              const int64_t f_hi = std::min<int64_t>(fn, fn - off);
              if (f_hi <= f_lo) continue;
              const size_t len = static_cast<size_t>(f_hi - f_lo);
              const T kv = ker ? ker[(ch * kt + dt) * kf + df] : T(0);
              if (!transposed_scatter) {
                kern::axpy(kv, xp + ti * fn + f_lo + off, op + t * fn + f_lo, len);
              } else {
                if (op)
                  kern::axpy(kv, xp + t * fn + f_lo, op + ti * fn + f_lo + off, len);
                if (gker)
                  gker[(ch * kt + dt) * kf + df] +=
                      kern::dot(xp + t * fn + f_lo, gp + ti * fn + f_lo + off, len);
              }
            }
          }
      }
  };

  auto out = make_op_output<T>(
      xs, {sx, sw}, [sx, sw, run](Storage<T>& o) {
        if (sx->requires_grad) sx->ensure_grad();
        if (sw->requires_grad) sw->ensure_grad();
        // gx: scatter of gout against the kernel; gw: correlate gout with x
        run(o.g.data(), sw->v.data(),
            sx->requires_grad ? sx->g.data() : nullptr, true,
            sw->requires_grad ? sw->g.data() : nullptr, sx->v.data());
      });
  std::fill(out.data().begin(), out.data().end(), T(0));
  run(sx->v.data(), sw->v.data(), out.data().data(), false, nullptr, nullptr);
  return out;
}

}  // namespace cmcr::nn

// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "cmcr/nn/batchnorm.hpp"
#include "cmcr/nn/conv.hpp"

namespace cmcr::nn {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Parameter init derives its stream from (seed, name) so adding or reordering
// layers never shifts another layer's draw.
template <class T>
Tensor<T> param_randn(Shape shape, const std::string& name, uint64_t seed,
                      double stddev) {
  std::mt19937_64 rng(mix_seed(seed, fnv1a64(name)));
  auto t = Tensor<T>::randn(std::move(shape), rng, static_cast<T>(stddev));
  t.set_requires_grad(true);
  return t;
}

template <class T>
Tensor<T> param_const(Shape shape, T value) {
  auto t = Tensor<T>::full(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

// Complex features ride as 2*C real channels: first half real parts, second
// half imaginary parts.
template <class T>
struct ComplexConv2d {
  int ci = 0, co = 0;  // complex channel counts
  ConvGeom geom;
  Tensor<T> w_real, w_imag, b_real, b_imag;

  void init(const std::string& name, uint64_t seed) {
    const double s = 1.0 / std::sqrt(2.0 * ci * geom.kt * geom.kf);
    w_real = param_randn<T>({co, ci, geom.kt, geom.kf}, name + ".w_real", seed, s);
    w_imag = param_randn<T>({co, ci, geom.kt, geom.kf}, name + ".w_imag", seed, s);
    b_real = param_const<T>({co}, T(0));
    b_imag = param_const<T>({co}, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    require(x.shape().size() == 4 && x.dim(1) == 2 * ci,
            "complex_conv2d: expected " + std::to_string(2 * ci) +
                " real channels, got " + shape_str(x.shape()));
    auto xr = narrow(x, 1, 0, ci);
    auto xi = narrow(x, 1, ci, ci);
    auto or_ = sub(conv2d(xr, w_real, geom), conv2d(xi, w_imag, geom));
    auto oi_ = add(conv2d(xr, w_imag, geom), conv2d(xi, w_real, geom));
    or_ = add_bias_channel(or_, b_real);
    oi_ = add_bias_channel(oi_, b_imag);
    return concat<T>({or_, oi_}, 1);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w_real", w_real});
    out.push_back({prefix + ".w_imag", w_imag});
    out.push_back({prefix + ".b_real", b_real});
    out.push_back({prefix + ".b_imag", b_imag});
  }
};

template <class T>
struct ComplexDeconv2d {
  int ci = 0, co = 0;
  ConvGeom geom;
  Tensor<T> w_real, w_imag, b_real, b_imag;

  void init(const std::string& name, uint64_t seed) {
    const double s = 1.0 / std::sqrt(2.0 * ci * geom.kt * geom.kf);
    w_real = param_randn<T>({ci, co, geom.kt, geom.kf}, name + ".w_real", seed, s);
    w_imag = param_randn<T>({ci, co, geom.kt, geom.kf}, name + ".w_imag", seed, s);
    b_real = param_const<T>({co}, T(0));
    b_imag = param_const<T>({co}, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, int64_t out_t, int64_t out_f) const {
    require(x.shape().size() == 4 && x.dim(1) == 2 * ci,
            "complex_deconv2d: expected " + std::to_string(2 * ci) +
                " real channels, got " + shape_str(x.shape()));
    auto xr = narrow(x, 1, 0, ci);
    auto xi = narrow(x, 1, ci, ci);
    auto or_ = sub(conv_transpose2d(xr, w_real, geom, out_t, out_f),
                   conv_transpose2d(xi, w_imag, geom, out_t, out_f));
    auto oi_ = add(conv_transpose2d(xr, w_imag, geom, out_t, out_f),
                   conv_transpose2d(xi, w_real, geom, out_t, out_f));
    or_ = add_bias_channel(or_, b_real);
    oi_ = add_bias_channel(oi_, b_imag);
    return concat<T>({or_, oi_}, 1);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w_real", w_real});
    out.push_back({prefix + ".w_imag", w_imag});
    out.push_back({prefix + ".b_real", b_real});
    out.push_back({prefix + ".b_imag", b_imag});
  }
};

template <class T>
struct BatchNorm2d {
  Tensor<T> gamma, beta;
  std::vector<T> run_mean, run_var;

  void init(int channels) {
    gamma = param_const<T>({channels}, T(1));
    beta = param_const<T>({channels}, T(0));
    run_mean.assign(channels, T(0));
    run_var.assign(channels, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma, beta, run_mean, run_var, training);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

template <class T>
struct PointwiseConv {
  Tensor<T> w, bias;

  void init(const std::string& name, uint64_t seed, int c_in, int c_out) {
    w = param_randn<T>({c_out, c_in, 1, 1}, name + ".w", seed, 1.0 / std::sqrt(c_in));
    bias = param_const<T>({c_out}, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    ConvGeom g;
    g.kt = g.kf = 1;
    g.pad_t0 = g.pad_t1 = g.pad_f0 = g.pad_f1 = 0;
    return add_bias_channel(conv2d(x, w, g), bias);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".bias", bias});
  }
};

// Depthwise 3x3 followed by pointwise 1x1. Parameter count is
// C_in*9 + C_in*C_out + C_out against C_in*C_out*9 for the full kernel.
template <class T>
struct DepthwiseSeparableConv {
  Tensor<T> dw;  // [C_in, 3, 3]
  PointwiseConv<T> pw;

  void init(const std::string& name, uint64_t seed, int c_in, int c_out,
            bool zero_init_pointwise = false) {
    dw = param_randn<T>({c_in, 3, 3}, name + ".dw", seed, 1.0 / 3.0);
    pw.init(name + ".pw", seed, c_in, c_out);
    if (zero_init_pointwise)
      std::fill(pw.w.data().begin(), pw.w.data().end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return pw.forward(depthwise_conv2d(x, dw));
  }

  int64_t param_count() const { return dw.numel() + pw.w.numel() + pw.bias.numel(); }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".dw", dw});
    pw.collect(out, prefix + ".pw");
  }
};

// Squeeze-excite style gate: g = sigmoid(W2 relu(W1 gap(x))), out = x * g.
template <class T>
struct ChannelAttention {
  Tensor<T> w1, b1, w2, b2;

  void init(const std::string& name, uint64_t seed, int channels, int reduction = 4) {
    const int hidden = std::max(1, channels / reduction);
    w1 = param_randn<T>({hidden, channels}, name + ".w1", seed, 1.0 / std::sqrt(channels));
    b1 = param_const<T>({hidden}, T(0));
    w2 = param_randn<T>({channels, hidden}, name + ".w2", seed, 1.0 / std::sqrt(hidden));
    b2 = param_const<T>({channels}, T(0));
  }

  Tensor<T> gate(const Tensor<T>& x) const {
    auto pooled = mean_pool_tf(x);  // [B, C]
    auto h = relu(add_bias_last(bmm(pooled, w1, false, true), b1));
    return sigmoid(add_bias_last(bmm(h, w2, false, true), b2));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return mul_channels(x, gate(x)); }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".b1", b1});
    out.push_back({prefix + ".w2", w2});
    out.push_back({prefix + ".b2", b2});
  }
};

}  // namespace cmcr::nn

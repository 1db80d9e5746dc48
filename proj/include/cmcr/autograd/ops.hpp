// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmcr/autograd/tensor.hpp"
#include "cmcr/kernels.hpp"

namespace cmcr {

namespace detail {

template <class T, class F>
void accum(Storage<T>& s, int64_t n, F&& contribution) {
  if (!s.requires_grad) return;
  s.ensure_grad();
  for (int64_t i = 0; i < n; ++i) s.g[i] += contribution(i);
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

template <class T>
void transpose2d(const T* src, int64_t rows, int64_t cols, T* dst) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto sa = a.storage(), sb = b.storage();
  auto out = make_op_output<T>(
      a.shape(), {sa, sb}, [sa, sb](Storage<T>& o) {
        detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i]; });
        detail::accum(*sb, o.numel(), [&](int64_t i) { return o.g[i]; });
      });
  kern::add(sa->v.data(), sb->v.data(), out.data().data(), sa->v.size());
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto sa = a.storage(), sb = b.storage();
  auto out = make_op_output<T>(
      a.shape(), {sa, sb}, [sa, sb](Storage<T>& o) {
        detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i]; });
        detail::accum(*sb, o.numel(), [&](int64_t i) { return -o.g[i]; });
      });
  kern::sub(sa->v.data(), sb->v.data(), out.data().data(), sa->v.size());
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto sa = a.storage(), sb = b.storage();
  auto out = make_op_output<T>(
      a.shape(), {sa, sb}, [sa, sb](Storage<T>& o) {
        detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i] * sb->v[i]; });
        detail::accum(*sb, o.numel(), [&](int64_t i) { return o.g[i] * sa->v[i]; });
      });
  kern::mul(sa->v.data(), sb->v.data(), out.data().data(), sa->v.size());
  return out;
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  auto sa = a.storage(), sb = b.storage();
  auto out = make_op_output<T>(
      a.shape(), {sa, sb}, [sa, sb](Storage<T>& o) {
        detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i] / sb->v[i]; });
        detail::accum(*sb, o.numel(), [&](int64_t i) {
          return -o.g[i] * o.v[i] / sb->v[i];
        });
      });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = sa->v[i] / sb->v[i];
  return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i]; });
  });
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = sa->v[i] + c;
  return out;
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa, c](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i] * c; });
  });
  kern::scale(c, sa->v.data(), out.data().data(), sa->v.size());
  return out;
}

// ---------------------------------------------------------------------------
// elementwise unary

template <class T>
Tensor<T> exp_(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i] * o.v[i]; });
  });
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = std::exp(sa->v[i]);
  return out;
}

template <class T>
Tensor<T> log_(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i] / sa->v[i]; });
  });
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = std::log(sa->v[i]);
  return out;
}

template <class T>
Tensor<T> abs_(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) {
      const T x = sa->v[i];
      return x > T(0) ? o.g[i] : (x < T(0) ? -o.g[i] : T(0));
    });
  });
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = std::abs(sa->v[i]);
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) {
      return o.g[i] * o.v[i] * (T(1) - o.v[i]);
    });
  });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = T(1) / (T(1) + std::exp(-sa->v[i]));
  return out;
}

// Unit-scale ELU: x for x > 0, exp(x) - 1 otherwise.
template <class T>
Tensor<T> elu(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) {
      return sa->v[i] > T(0) ? o.g[i] : o.g[i] * (o.v[i] + T(1));
    });
  });
  for (int64_t i = 0; i < a.numel(); ++i) {
    const T x = sa->v[i];
    out.data()[i] = x > T(0) ? x : std::exp(x) - T(1);
  }
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(a.shape(), {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) {
      return sa->v[i] > T(0) ? o.g[i] : T(0);
    });
  });
  for (int64_t i = 0; i < a.numel(); ++i)
    out.data()[i] = sa->v[i] > T(0) ? sa->v[i] : T(0);
  return out;
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto sa = a.storage();
  auto out = make_op_output<T>(Shape{1}, {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, sa->numel(), [&](int64_t) { return o.g[0]; });
  });
  out.data()[0] = kern::sum(sa->v.data(), sa->v.size());
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  auto sa = a.storage();
  const T inv = T(1) / static_cast<T>(a.numel());
  auto out = make_op_output<T>(Shape{1}, {sa}, [sa, inv](Storage<T>& o) {
    detail::accum(*sa, sa->numel(), [&](int64_t) { return o.g[0] * inv; });
  });
  out.data()[0] = kern::sum(sa->v.data(), sa->v.size()) * inv;
  return out;
}

// ---------------------------------------------------------------------------
// row ops over the trailing dimension

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require(!a.shape().empty() && a.shape().back() >= 1,
          "softmax_rows: trailing dimension must be >= 1");
  auto sa = a.storage();
  const int64_t n = a.shape().back();
  const int64_t rows = a.numel() / n;
  auto out = make_op_output<T>(a.shape(), {sa}, [sa, n, rows](Storage<T>& o) {
    if (!sa->requires_grad) return;
    sa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = o.v.data() + r * n;
      const T* gy = o.g.data() + r * n;
      T dotv = kern::dot(gy, y, static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i)
        sa->g[r * n + i] += y[i] * (gy[i] - dotv);
    }
  });
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = sa->v.data() + r * n;
    T* y = out.data().data() + r * n;
    const T mx = kern::max(x, static_cast<size_t>(n));
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    const T inv = T(1) / s;
    for (int64_t i = 0; i < n; ++i) y[i] *= inv;
  }
  return out;
}

template <class T>
Tensor<T> logsumexp_rows(const Tensor<T>& a) {
  require(!a.shape().empty() && a.shape().back() >= 1,
          "logsumexp_rows: trailing dimension must be >= 1");
  auto sa = a.storage();
  const int64_t n = a.shape().back();
  const int64_t rows = a.numel() / n;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto out = make_op_output<T>(out_shape, {sa}, [sa, n, rows](Storage<T>& o) {
    if (!sa->requires_grad) return;
    sa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T lse = o.v[r];
      for (int64_t i = 0; i < n; ++i)
        sa->g[r * n + i] += o.g[r] * std::exp(sa->v[r * n + i] - lse);
    }
  });
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = sa->v.data() + r * n;
    const T mx = kern::max(x, static_cast<size_t>(n));
    T s = 0;
    for (int64_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
    out.data()[r] = mx + std::log(s);
  }
  return out;
}

// Descending stable sort of each trailing-dimension row. Gradients route
// through the permutation: output slot j feeds input slot perm[j]. perm_out,
// when supplied, receives all rows' permutations concatenated.
template <class T>
Tensor<T> sort_rows_desc(const Tensor<T>& a,
                         std::vector<int32_t>* perm_out = nullptr) {
  require(!a.shape().empty(), "sort_rows_desc: rank must be >= 1");
  auto sa = a.storage();
  const int64_t n = a.shape().back();
  const int64_t rows = a.numel() / n;
  auto perm = std::make_shared<std::vector<int32_t>>(a.numel());
  for (int64_t r = 0; r < rows; ++r) {
    int32_t* p = perm->data() + r * n;
    std::iota(p, p + n, 0);
    const T* x = sa->v.data() + r * n;
    std::stable_sort(p, p + n,
                     [x](int32_t i, int32_t j) { return x[i] > x[j]; });
  }
  auto out = make_op_output<T>(a.shape(), {sa}, [sa, perm, n, rows](Storage<T>& o) {
    if (!sa->requires_grad) return;
    sa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < n; ++j)
        sa->g[r * n + (*perm)[r * n + j]] += o.g[r * n + j];
  });
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j)
      out.data()[r * n + j] = sa->v[r * n + (*perm)[r * n + j]];
  if (perm_out) *perm_out = *perm;
  return out;
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  require(shape_numel(new_shape) == a.numel(),
          "reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
              shape_str(new_shape));
  auto sa = a.storage();
  auto out = make_op_output<T>(new_shape, {sa}, [sa](Storage<T>& o) {
    detail::accum(*sa, o.numel(), [&](int64_t i) { return o.g[i]; });
  });
  std::copy(sa->v.begin(), sa->v.end(), out.data().begin());
  return out;
}

// Contiguous slice along one dimension.
template <class T>
Tensor<T> narrow(const Tensor<T>& a, size_t dim, int64_t start, int64_t len) {
  const Shape& sh = a.shape();
  require(dim < sh.size(), "narrow: bad dim");
  require(start >= 0 && len >= 1 && start + len <= sh[dim],
          "narrow: slice [" + std::to_string(start) + "," +
              std::to_string(start + len) + ") out of range for dim size " +
              std::to_string(sh[dim]));
  Shape out_shape = sh;
  out_shape[dim] = len;
  int64_t inner = 1;
  for (size_t i = dim + 1; i < sh.size(); ++i) inner *= sh[i];
  int64_t outer = 1;
  for (size_t i = 0; i < dim; ++i) outer *= sh[i];
  const int64_t in_stride = sh[dim] * inner;
  const int64_t out_stride = len * inner;
  auto sa = a.storage();
  auto out = make_op_output<T>(
      out_shape, {sa},
      [sa, outer, inner, len, start, in_stride, out_stride](Storage<T>& o) {
        if (!sa->requires_grad) return;
        sa->ensure_grad();
        for (int64_t b = 0; b < outer; ++b)
          kern::axpy(T(1), o.g.data() + b * out_stride,
                     sa->g.data() + b * in_stride + start * inner,
                     static_cast<size_t>(len * inner));
      });
  for (int64_t b = 0; b < outer; ++b)
    std::copy_n(sa->v.data() + b * in_stride + start * inner, len * inner,
                out.data().data() + b * out_stride);
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t dim) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& sh0 = parts[0].shape();
  require(dim < sh0.size(), "concat: bad dim");
  Shape out_shape = sh0;
  int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& sh = p.shape();
    require(sh.size() == sh0.size(), "concat: rank mismatch");
    for (size_t i = 0; i < sh.size(); ++i)
      require(i == dim || sh[i] == sh0[i],
              "concat: shape mismatch at dim " + std::to_string(i));
    total += sh[dim];
  }
  out_shape[dim] = total;
  int64_t inner = 1;
  for (size_t i = dim + 1; i < sh0.size(); ++i) inner *= sh0[i];
  int64_t outer = 1;
  for (size_t i = 0; i < dim; ++i) outer *= sh0[i];

  std::vector<std::shared_ptr<Storage<T>>> inputs;
  inputs.reserve(parts.size());
  std::vector<int64_t> lens;
  for (const auto& p : parts) {
    inputs.push_back(p.storage());
    lens.push_back(p.shape()[dim]);
  }
  const int64_t out_stride = total * inner;
  auto bw_inputs = inputs;
  auto out = make_op_output<T>(
      out_shape, std::move(inputs),
      [bw_inputs, lens, outer, inner, out_stride](Storage<T>& o) {
        for (int64_t b = 0; b < outer; ++b) {
          int64_t off = 0;
          for (size_t p = 0; p < bw_inputs.size(); ++p) {
            auto& sp = *bw_inputs[p];
            const int64_t chunk = lens[p] * inner;
            if (sp.requires_grad) {
              sp.ensure_grad();
              kern::axpy(T(1), o.g.data() + b * out_stride + off,
                         sp.g.data() + b * chunk, static_cast<size_t>(chunk));
            }
            off += chunk;
          }
        }
      });
  for (int64_t b = 0; b < outer; ++b) {
    int64_t off = 0;
    for (size_t p = 0; p < bw_inputs.size(); ++p) {
      const int64_t chunk = lens[p] * inner;
      std::copy_n(bw_inputs[p]->v.data() + b * chunk, chunk,
                  out.data().data() + b * out_stride + off);
      off += chunk;
    }
  }
  return out;
}

// Reorders dim-1 entries of a [N0, C, ...] tensor: out channel j = perm[j].
template <class T>
Tensor<T> gather_channels(const Tensor<T>& a, std::vector<int32_t> perm) {
  const Shape& sh = a.shape();
  require(sh.size() >= 2, "gather_channels: rank must be >= 2");
  const int64_t c_in = sh[1];
  for (int32_t p : perm)
    require(p >= 0 && p < c_in, "gather_channels: index out of range");
  Shape out_shape = sh;
  out_shape[1] = static_cast<int64_t>(perm.size());
  int64_t inner = 1;
  for (size_t i = 2; i < sh.size(); ++i) inner *= sh[i];
  const int64_t outer = sh[0];
  auto sa = a.storage();
  auto pm = std::make_shared<std::vector<int32_t>>(std::move(perm));
  const int64_t c_out = out_shape[1];
  auto out = make_op_output<T>(
      out_shape, {sa}, [sa, pm, outer, inner, c_in, c_out](Storage<T>& o) {
        if (!sa->requires_grad) return;
        sa->ensure_grad();
        for (int64_t b = 0; b < outer; ++b)
          for (int64_t j = 0; j < c_out; ++j)
            kern::axpy(T(1), o.g.data() + (b * c_out + j) * inner,
                       sa->g.data() + (b * c_in + (*pm)[j]) * inner,
                       static_cast<size_t>(inner));
      });
  for (int64_t b = 0; b < outer; ++b)
    for (int64_t j = 0; j < c_out; ++j)
      std::copy_n(sa->v.data() + (b * c_in + (*pm)[j]) * inner, inner,
                  out.data().data() + (b * c_out + j) * inner);
  return out;
}

// ---------------------------------------------------------------------------
// batched matrix multiply

// a: [batch..., M, K] (swapped when trans_a), b: matching batch dims or plain
// 2-D (shared across the batch). Returns [batch..., M, N].
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
              bool trans_b = false) {
  const Shape& ash = a.shape();
  const Shape& bsh = b.shape();
  require(ash.size() >= 2 && bsh.size() >= 2, "bmm: rank must be >= 2");
  const int64_t ar = ash[ash.size() - 2], ac = ash.back();
  const int64_t br = bsh[bsh.size() - 2], bc = bsh.back();
  const int64_t m = trans_a ? ac : ar;
  const int64_t ka = trans_a ? ar : ac;
  const int64_t kb = trans_b ? bc : br;
  const int64_t n = trans_b ? br : bc;
  require(ka == kb, "bmm: inner dimension mismatch " + shape_str(ash) + " x " +
                        shape_str(bsh));
  const bool b_shared = bsh.size() == 2 && ash.size() > 2;
  int64_t batch = 1;
  if (!b_shared) {
    require(ash.size() == bsh.size(), "bmm: batch rank mismatch");
    for (size_t i = 0; i + 2 < ash.size(); ++i)
      require(ash[i] == bsh[i], "bmm: batch dim mismatch");
  }
  for (size_t i = 0; i + 2 < ash.size(); ++i) batch *= ash[i];

  Shape out_shape(ash.begin(), ash.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  auto sa = a.storage(), sb = b.storage();
  const int64_t k = ka;
  const int64_t a_slice = ar * ac, b_slice = b_shared ? 0 : br * bc;
  const int64_t o_slice = m * n;

  auto out = make_op_output<T>(
      out_shape, {sa, sb},
      [sa, sb, m, n, k, batch, a_slice, b_slice, o_slice, trans_a, trans_b,
       ar, ac, br, bc](Storage<T>& o) {
        std::vector<T> tmp;
        if (sa->requires_grad) {
          sa->ensure_grad();
          for (int64_t s = 0; s < batch; ++s) {
            const T* go = o.g.data() + s * o_slice;
            const T* bp = sb->v.data() + s * b_slice;
            T* ga = sa->g.data() + s * a_slice;
            if (!trans_a) {
              // gA[M,K] += gO * op(B)^T
              if (trans_b) {
                kern::gemm(m, k, n, go, n, bp, bc, true, ga, ac);
              } else {
                tmp.resize(static_cast<size_t>(n) * k);
                detail::transpose2d(bp, br, bc, tmp.data());
                kern::gemm(m, k, n, go, n, tmp.data(), k, true, ga, ac);
              }
            } else {
              // raw A is [K,M]: gA_raw += op(B) * gO^T
              tmp.resize(static_cast<size_t>(n) * m);
              detail::transpose2d(go, m, n, tmp.data());
              if (trans_b) {
                std::vector<T> bt(static_cast<size_t>(k) * n);
                detail::transpose2d(bp, br, bc, bt.data());
                kern::gemm(k, m, n, bt.data(), n, tmp.data(), m, true, ga, ac);
              } else {
                kern::gemm(k, m, n, bp, bc, tmp.data(), m, true, ga, ac);
              }
            }
          }
        }
        if (sb->requires_grad) {
          sb->ensure_grad();
          for (int64_t s = 0; s < batch; ++s) {
            const T* go = o.g.data() + s * o_slice;
            const T* ap = sa->v.data() + s * a_slice;
            T* gb = sb->g.data() + s * b_slice;
            if (!trans_b) {
              // gB[K,N] += op(A)^T * gO
              if (trans_a) {
                kern::gemm(k, n, m, ap, ac, go, n, true, gb, bc);
              } else {
                tmp.resize(static_cast<size_t>(k) * m);
                detail::transpose2d(ap, ar, ac, tmp.data());
                kern::gemm(k, n, m, tmp.data(), m, go, n, true, gb, bc);
              }
            } else {
              // raw B is [N,K]: gB_raw += gO^T * op(A)
              tmp.resize(static_cast<size_t>(n) * m);
              detail::transpose2d(go, m, n, tmp.data());
              if (trans_a) {
                std::vector<T> at(static_cast<size_t>(m) * k);
                detail::transpose2d(ap, ar, ac, at.data());
                kern::gemm(n, k, m, tmp.data(), m, at.data(), k, true, gb, bc);
              } else {
                kern::gemm(n, k, m, tmp.data(), m, ap, ac, true, gb, bc);
              }
            }
          }
        }
      });

  std::vector<T> ta_buf, tb_buf;
  for (int64_t s = 0; s < batch; ++s) {
    const T* ap = sa->v.data() + s * a_slice;
    const T* bp = sb->v.data() + s * b_slice;
    if (trans_a) {
      ta_buf.resize(static_cast<size_t>(m) * k);
      detail::transpose2d(ap, ar, ac, ta_buf.data());
      ap = ta_buf.data();
    }
    if (trans_b) {
      tb_buf.resize(static_cast<size_t>(k) * n);
      detail::transpose2d(bp, br, bc, tb_buf.data());
      bp = tb_buf.data();
    }
    kern::gemm(m, n, k, ap, k, bp, n, false,
               out.data().data() + s * o_slice, n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// broadcast helpers used by the model

// x: [B, C, inner...] + bias per channel.
template <class T>
Tensor<T> add_bias_channel(const Tensor<T>& x, const Tensor<T>& bias) {
  const Shape& sh = x.shape();
  require(sh.size() >= 2 && bias.shape() == Shape{sh[1]},
          "add_bias_channel: bias shape mismatch");
  int64_t inner = 1;
  for (size_t i = 2; i < sh.size(); ++i) inner *= sh[i];
  const int64_t outer = sh[0], c = sh[1];
  auto sx = x.storage(), sbias = bias.storage();
  auto out = make_op_output<T>(
      sh, {sx, sbias}, [sx, sbias, outer, c, inner](Storage<T>& o) {
        detail::accum(*sx, o.numel(), [&](int64_t i) { return o.g[i]; });
        if (sbias->requires_grad) {
          sbias->ensure_grad();
          for (int64_t b = 0; b < outer; ++b)
            for (int64_t j = 0; j < c; ++j)
              sbias->g[j] += kern::sum(o.g.data() + (b * c + j) * inner,
                                       static_cast<size_t>(inner));
        }
      });
  for (int64_t b = 0; b < outer; ++b)
    for (int64_t j = 0; j < c; ++j) {
      const T bv = sbias->v[j];
      const T* src = sx->v.data() + (b * c + j) * inner;
      T* dst = out.data().data() + (b * c + j) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] + bv;
    }
  return out;
}

// x: [..., H] + bias over the last dimension.
template <class T>
Tensor<T> add_bias_last(const Tensor<T>& x, const Tensor<T>& bias) {
  const Shape& sh = x.shape();
  require(!sh.empty() && bias.shape() == Shape{sh.back()},
          "add_bias_last: bias shape mismatch");
  const int64_t n = sh.back();
  const int64_t rows = x.numel() / n;
  auto sx = x.storage(), sbias = bias.storage();
  auto out = make_op_output<T>(sh, {sx, sbias}, [sx, sbias, rows, n](Storage<T>& o) {
    detail::accum(*sx, o.numel(), [&](int64_t i) { return o.g[i]; });
    if (sbias->requires_grad) {
      sbias->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        kern::axpy(T(1), o.g.data() + r * n, sbias->g.data(),
                   static_cast<size_t>(n));
    }
  });
  for (int64_t r = 0; r < rows; ++r)
    kern::add(sx->v.data() + r * n, sbias->v.data(),
              out.data().data() + r * n, static_cast<size_t>(n));
  return out;
}

// Global average pool over the trailing spatial dims: [B, C, T, F] -> [B, C].
template <class T>
Tensor<T> mean_pool_tf(const Tensor<T>& x) {
  const Shape& sh = x.shape();
  require(sh.size() == 4, "mean_pool_tf: expected [B,C,T,F]");
  const int64_t b = sh[0], c = sh[1], inner = sh[2] * sh[3];
  const T inv = T(1) / static_cast<T>(inner);
  auto sx = x.storage();
  auto out = make_op_output<T>(Shape{b, c}, {sx}, [sx, b, c, inner, inv](Storage<T>& o) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (int64_t i = 0; i < b * c; ++i) {
      const T gv = o.g[i] * inv;
      T* dst = sx->g.data() + i * inner;
      for (int64_t j = 0; j < inner; ++j) dst[j] += gv;
    }
  });
  for (int64_t i = 0; i < b * c; ++i)
    out.data()[i] =
        kern::sum(sx->v.data() + i * inner, static_cast<size_t>(inner)) * inv;
  return out;
}

// Elementwise product with `a` tiled along dim 0: x [B, rest...] * a [rest...].
template <class T>
Tensor<T> mul_bcast0(const Tensor<T>& x, const Tensor<T>& a) {
  const Shape& xs = x.shape();
  require(xs.size() >= 2 && Shape(xs.begin() + 1, xs.end()) == a.shape(),
          "mul_bcast0: shape mismatch " + shape_str(xs) + " vs " +
              shape_str(a.shape()));
  const int64_t b = xs[0], inner = a.numel();
  auto sx = x.storage(), sa = a.storage();
  auto out = make_op_output<T>(xs, {sx, sa}, [sx, sa, b, inner](Storage<T>& o) {
    if (sx->requires_grad) {
      sx->ensure_grad();
      for (int64_t s = 0; s < b; ++s)
        for (int64_t i = 0; i < inner; ++i)
          sx->g[s * inner + i] += o.g[s * inner + i] * sa->v[i];
    }
    if (sa->requires_grad) {
      sa->ensure_grad();
      for (int64_t s = 0; s < b; ++s)
        for (int64_t i = 0; i < inner; ++i)
          sa->g[i] += o.g[s * inner + i] * sx->v[s * inner + i];
    }
  });
  for (int64_t s = 0; s < b; ++s)
    kern::mul(sx->v.data() + s * inner, sa->v.data(),
              out.data().data() + s * inner, static_cast<size_t>(inner));
  return out;
}

// Per-channel gate: x [B, C, T, F] * g [B, C] broadcast over T, F.
template <class T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& gate) {
  const Shape& sh = x.shape();
  require(sh.size() == 4 && gate.shape() == Shape{sh[0], sh[1]},
          "mul_channels: gate shape mismatch");
  const int64_t bc = sh[0] * sh[1], inner = sh[2] * sh[3];
  auto sx = x.storage(), sg = gate.storage();
  auto out = make_op_output<T>(sh, {sx, sg}, [sx, sg, bc, inner](Storage<T>& o) {
    if (sx->requires_grad) {
      sx->ensure_grad();
      for (int64_t i = 0; i < bc; ++i)
        kern::axpy(sg->v[i], o.g.data() + i * inner, sx->g.data() + i * inner,
                   static_cast<size_t>(inner));
    }
    if (sg->requires_grad) {
      sg->ensure_grad();
      for (int64_t i = 0; i < bc; ++i)
        sg->g[i] += kern::dot(o.g.data() + i * inner, sx->v.data() + i * inner,
                              static_cast<size_t>(inner));
    }
  });
  for (int64_t i = 0; i < bc; ++i)
    kern::scale(sg->v[i], sx->v.data() + i * inner,
                out.data().data() + i * inner, static_cast<size_t>(inner));
  return out;
}

}  // namespace cmcr

// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cmcr/common.hpp"

// Dense tensors with define-by-run reverse-mode differentiation. The graph is
// rebuilt on every forward pass: each recorded op attaches a Node to its
// output holding the input storages and a backward closure. backward(root)
// walks the nodes in reverse topological order. Training uses float; the
// double instantiation exists for finite-difference oracles.

namespace cmcr {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

template <class T>
struct Storage;

template <class T>
struct Node {
  std::vector<std::shared_ptr<Storage<T>>> inputs;
  // Reads out.g, accumulates into the inputs' grads.
  std::function<void(Storage<T>&)> backward;
};

template <class T>
struct Storage {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated on first accumulation only
  bool requires_grad = false;
  std::unique_ptr<Node<T>> node;

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), T(0));
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_mode() { return detail::grad_enabled; }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Storage<T>> s) : s_(std::move(s)) {}

  static Tensor zeros(Shape shape) {
    auto s = std::make_shared<Storage<T>>();
    s->shape = std::move(shape);
    s->v.assign(static_cast<size_t>(shape_numel(s->shape)), T(0));
    return Tensor(std::move(s));
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.s_->v.begin(), t.s_->v.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from(Shape shape, std::vector<T> values) {
    require(shape_numel(shape) == static_cast<int64_t>(values.size()),
            "tensor: shape " + shape_str(shape) + " does not match " +
                std::to_string(values.size()) + " values");
    auto s = std::make_shared<Storage<T>>();
    s->shape = std::move(shape);
    s->v = std::move(values);
    return Tensor(std::move(s));
  }

  static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T(1)) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& x : t.s_->v) x = static_cast<T>(dist(rng)) * stddev;
    return t;
  }

  Tensor& set_requires_grad(bool rg = true) {
    s_->requires_grad = rg;
    return *this;
  }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  int64_t dim(size_t i) const { return s_->shape[i]; }
  int64_t numel() const { return s_->numel(); }
  bool requires_grad() const { return s_->requires_grad; }

  std::span<T> data() { return {s_->v.data(), s_->v.size()}; }
  std::span<const T> data() const { return {s_->v.data(), s_->v.size()}; }
  bool has_grad() const { return !s_->g.empty(); }
  std::span<T> grad() {
    require(has_grad(), "tensor: gradient not populated");
    return {s_->g.data(), s_->g.size()};
  }
  std::span<const T> grad() const {
    require(has_grad(), "tensor: gradient not populated");
    return {s_->g.data(), s_->g.size()};
  }
  void zero_grad() { std::fill(s_->g.begin(), s_->g.end(), T(0)); }
  void drop_grad() { s_->g.clear(); }

  T item() const {
    require(numel() == 1, "tensor: item() on non-scalar " + shape_str(shape()));
    return s_->v[0];
  }

  std::shared_ptr<Storage<T>>& storage() { return s_; }
  const std::shared_ptr<Storage<T>>& storage() const { return s_; }

 private:
  std::shared_ptr<Storage<T>> s_;
};

namespace detail {

// Accumulate src into the grad buffer of dst if it participates in the graph.
template <class T>
void accum_grad(Storage<T>& dst, const T* src, size_t n) {
  if (!dst.requires_grad) return;
  dst.ensure_grad();
  for (size_t i = 0; i < n; ++i) dst.g[i] += src[i];
}

template <class T>
void topo_visit(Storage<T>* s, std::unordered_set<Storage<T>*>& seen,
                std::vector<Storage<T>*>& order) {
  if (!s->node || seen.count(s)) return;
  seen.insert(s);
  for (auto& in : s->node->inputs) topo_visit(in.get(), seen, order);
  order.push_back(s);
}

}  // namespace detail

// Reverse-mode sweep from a scalar root. Leaf grads persist and accumulate
// across calls; grads of recorded intermediates are sweep-local and released
// after propagation, so a second backward contributes exactly one more
// dRoot/dParam to every leaf.
template <class T>
void backward(Tensor<T>& root) {
  require(root.numel() == 1, "backward: root must be scalar, got " +
                                 shape_str(root.shape()));
  Storage<T>* rs = root.storage().get();
  require(rs->requires_grad || rs->node != nullptr,
          "backward: root does not participate in any recorded computation");
  std::unordered_set<Storage<T>*> seen;
  std::vector<Storage<T>*> order;
  detail::topo_visit(rs, seen, order);
  rs->ensure_grad();
  rs->g[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Storage<T>* s = *it;
    if (s->g.empty()) continue;  // no gradient reached this node
    s->node->backward(*s);
    s->g.clear();
  }
}

// Output tensor for a recorded op: requires_grad if any input does and grad
// mode is on; the node is attached only in that case, so grad-free forward
// passes allocate nothing extra.
template <class T>
Tensor<T> make_op_output(Shape shape,
                         std::vector<std::shared_ptr<Storage<T>>> inputs,
                         std::function<void(Storage<T>&)> bw) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  if (!grad_mode()) return out;
  bool rg = false;
  for (auto& in : inputs) rg = rg || in->requires_grad;
  if (!rg) return out;
  out.storage()->requires_grad = true;
  out.storage()->node = std::make_unique<Node<T>>();
  out.storage()->node->inputs = std::move(inputs);
  out.storage()->node->backward = std::move(bw);
  return out;
}

}  // namespace cmcr

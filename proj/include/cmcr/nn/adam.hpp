// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "cmcr/autograd/tensor.hpp"
#include "cmcr/kernels.hpp"

namespace cmcr {

// Adam with bias correction. Moment buffers are zero-initialized and
// shape-matched to their parameters; step() consumes and clears gradients.
template <class T>
class Adam {
 public:
  T lr = static_cast<T>(1e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);

  Adam() = default;
  explicit Adam(std::vector<Tensor<T>> params, T learning_rate = static_cast<T>(1e-4))
      : lr(learning_rate), params_(std::move(params)) {
    for (auto& p : params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  void step() {
    ++step_count_;
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_count_));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      require(p.has_grad(), "adam: parameter " + std::to_string(i) +
                                " has no gradient; run backward first");
      kern::adam(p.data().data(), p.grad().data(), m_[i].data(), v_[i].data(),
                 static_cast<size_t>(p.numel()), lr, beta1, beta2, eps, bc1, bc2);
      p.zero_grad();
    }
  }

  int64_t step_count() const { return step_count_; }
  size_t size() const { return params_.size(); }
  std::vector<T>& moment1(size_t i) { return m_[i]; }
  std::vector<T>& moment2(size_t i) { return v_[i]; }
  void set_step_count(int64_t s) { step_count_ = s; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  int64_t step_count_ = 0;
};

}  // namespace cmcr

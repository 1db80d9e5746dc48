#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cmcr/autograd/tensor.hpp"

namespace testutil {

// Central finite differences against the analytic backward pass, run at
// 64-bit. `f` must map the leaf tensors to a scalar; leaves are perturbed one
// coordinate at a time with h = 1e-5.
struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string where;
};

// The relative error uses a 1e-3 magnitude floor: central differences carry
// ~1e-12 absolute noise at h = 1e-5, so coordinates whose true gradient is
// exactly zero (e.g. a conv bias feeding batch norm) would otherwise compare
// noise against noise.
inline GradCheckResult grad_check(
    std::vector<cmcr::Tensor<double>>& leaves,
    const std::function<cmcr::Tensor<double>()>& f, double h = 1e-5) {
  using cmcr::Tensor;
  for (auto& p : leaves) {
    p.set_requires_grad(true);
    if (p.has_grad()) p.drop_grad();
  }
  Tensor<double> loss = f();
  cmcr::backward(loss);

  GradCheckResult res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& p = leaves[li];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad())
      std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double orig = p.data()[i];
      p.data()[i] = orig + h;
      const double fp = f().item();
      p.data()[i] = orig - h;
      const double fm = f().item();
      p.data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic[static_cast<size_t>(i)];
      const double abs_err = std::abs(fd - ad);
      const double rel = abs_err / std::max({std::abs(fd), std::abs(ad), 1e-3});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.where = "leaf " + std::to_string(li) + " index " + std::to_string(i) +
                    " analytic " + std::to_string(ad) + " fd " + std::to_string(fd);
      }
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
    }
  }
  return res;
}

inline std::vector<double> random_vec(size_t n, uint64_t seed, double lo = -1.0,
                                      double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<float> random_vecf(size_t n, uint64_t seed, float lo = -1.0f,
                                      float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Scratch directory rooted under the system tmp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("cmcr_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil

#pragma once

// Elementwise Adam with bias correction, shared by network training and the
// design loop (the two use different learning rates but the same update rule).

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "nlwg/errors.hpp"

namespace nlwg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  int steps() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

  // One descent step in place. Ascent callers feed the negated gradient.
  void step(std::span<double> params, std::span<const double> grad, const AdamConfig& cfg) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ShapeError("adam state length does not match the parameter vector");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg.beta2, t_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const double g = grad[i];
      m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g;
      v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g * g;
      params[i] -= cfg.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg.eps);
    }
  }

 private:
  int t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace nlwg

#pragma once

#include <cmath>
#include <vector>

#include "cheaptalk/errors.hpp"
#include "cheaptalk/nn/tensor.hpp"

namespace cheaptalk::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over a fixed parameter list. Parameters without a
// gradient are treated as having a zero gradient.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      first_.push_back(Matrix::Zero(p.rows(), p.cols()));
      second_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) {
        if (first_[i].isZero(0.0) && second_[i].isZero(0.0)) continue;
      }
      Matrix g = p.grad();
      first_[i] = cfg_.beta1 * first_[i] + (1.0 - cfg_.beta1) * g;
      second_[i] = cfg_.beta2 * second_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      Matrix m_hat = first_[i] / c1;
      Matrix v_hat = second_[i] / c2;
      p.mutable_value().array() -=
          cfg_.learning_rate * m_hat.array() / (v_hat.array().sqrt() + cfg_.epsilon);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Rescales gradients so their global L2 norm is at most max_norm. Returns
  // the norm before clipping.
  double clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.has_grad()) sq += p.node()->grad.squaredNorm();
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      double s = max_norm / (norm + 1e-12);
      for (auto& p : params_)
        if (p.has_grad()) p.node()->grad *= s;
    }
    return norm;
  }

  long step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Matrix>& first_moments() const { return first_; }
  const std::vector<Matrix>& second_moments() const { return second_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Matrix> first_, second_;
  AdamConfig cfg_;
  long steps_ = 0;
};

}  // namespace cheaptalk::nn

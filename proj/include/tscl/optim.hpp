#pragma once

#include <cmath>
#include <vector>

#include "tscl/nn.hpp"

namespace tscl::optim {

using nn::Matrix;

// SGD with heavy-ball momentum. Weight decay is added to the step directly
// (w -= lr * (v + wd * w)) rather than folded into the gradient, and only for
// parameters flagged for decay.
template <class S>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::ParamRefs<S>& refs, double lr) {
    if (velocity_.empty())
      for (auto* p : refs.params) velocity_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    if (velocity_.size() != refs.params.size())
      throw StateError("sgd: parameter list changed between steps");
    const S m = static_cast<S>(momentum_);
    const S eta = static_cast<S>(lr);
    const S wd = static_cast<S>(weight_decay_);
    for (std::size_t i = 0; i < refs.params.size(); ++i) {
      auto* p = refs.params[i];
      velocity_[i] = m * velocity_[i] + p->grad;
      if (p->decay && weight_decay_ > 0.0) p->value -= eta * (velocity_[i] + wd * p->value);
      else p->value -= eta * velocity_[i];
    }
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix<S>> velocity_;
};

// Adam with decoupled weight decay; each parameter carries its own learning
// rate so that head and encoder can train at different rates.
template <class S>
class AdamW {
 public:
  AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(nn::ParamRefs<S>& refs, const std::vector<double>& lrs) {
    if (lrs.size() != refs.params.size()) throw ArgumentError("adamw: one learning rate per parameter");
    if (m_.empty())
      for (auto* p : refs.params) {
        m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
        t_.push_back(0);
      }
    if (m_.size() != refs.params.size()) throw StateError("adamw: parameter list changed between steps");
    for (std::size_t i = 0; i < refs.params.size(); ++i) {
      if (lrs[i] <= 0.0) continue;
      auto* p = refs.params[i];
      ++t_[i];
      const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_[i]));
      const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_[i]));
      m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * p->grad;
      v_[i] = static_cast<S>(beta2_) * v_[i] +
              static_cast<S>(1.0 - beta2_) * p->grad.array().square().matrix();
      if (p->decay && weight_decay_ > 0.0)
        p->value *= static_cast<S>(1.0 - lrs[i] * weight_decay_);
      const Matrix<S> update =
          (m_[i].array() / static_cast<S>(c1)) /
          ((v_[i].array() / static_cast<S>(c2)).sqrt() + static_cast<S>(eps_));
      p->value -= static_cast<S>(lrs[i]) * update;
    }
  }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::vector<Matrix<S>> m_, v_;
  std::vector<long> t_;
};

template <class S>
double grad_norm(const nn::ParamRefs<S>& refs) {
  double sq = 0.0;
  for (const auto* p : refs.params) sq += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

}  // namespace tscl::optim

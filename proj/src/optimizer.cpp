// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/optimizer.hpp"

#include <cmath>

namespace melssl::train {

void AdamW::register_params(const std::vector<nn::Param*>& params) {
  params_ = params;
  m_.clear();
  v_.clear();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  t_ = 0;
}

double AdamW::grad_norm() const {
  double sq = 0.0;
  for (const auto* p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void AdamW::step(double lr, double weight_decay) {
  if (params_.empty()) throw ConfigError("AdamW: no parameters registered");
  ++t_;

  double scale = 1.0;
  if (cfg_.clip_grad_norm > 0.0) {
    const double norm = grad_norm();
    if (norm > cfg_.clip_grad_norm) scale = cfg_.clip_grad_norm / norm;
  }

  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Param& p = *params_[i];
    const Matrix g = scale * p.grad;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Matrix update =
        (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + cfg_.eps);
    p.value -= lr * update.matrix();
    if (p.decay && weight_decay != 0.0) p.value -= lr * weight_decay * p.value;
  }
}

}  // namespace melssl::train

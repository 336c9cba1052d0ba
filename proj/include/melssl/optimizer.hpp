// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/nn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace melssl::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_grad_norm = 0.0;  // 0 disables clipping
};

/**
 * Adam with decoupled weight decay. Decay is applied only to parameters
 * whose Param::decay flag is set. Moments are keyed by registration order,
 * so the parameter list must be stable across steps and checkpoints.
 */
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void register_params(const std::vector<nn::Param*>& params);

  /** One update from the accumulated grads; grads are left untouched. */
  void step(double lr, double weight_decay);

  std::int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

  /** Global grad norm across registered params (diagnostic / clipping). */
  double grad_norm() const;

  // Checkpoint access.
  std::vector<Matrix>& moments_m() { return m_; }
  std::vector<Matrix>& moments_v() { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  std::vector<nn::Param*> params_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace melssl::train

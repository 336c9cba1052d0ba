// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"

#include <cstdint>

namespace melssl::train {

/**
 * Half-cosine interpolation from start_value to end_value over
 * [warmup_steps, total_steps]; during warmup (learning rate only)
 * the value rises linearly from 0 to start_value.
 */
struct CosineSchedule {
  double start_value = 0.0;
  double end_value = 0.0;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;

  void validate() const;
};

double cosine_value(const CosineSchedule& schedule, std::int64_t step);

/** The three pre-training curves. */
struct ScheduleSet {
  CosineSchedule lr;            // peak -> 1e-6, linear warmup from 0
  CosineSchedule weight_decay;  // 0.04 -> 0.4
  CosineSchedule ema_decay;     // m0 -> 1
};

ScheduleSet make_schedules(double peak_lr, double final_lr, double wd_start,
                           double wd_end, double m0, double m_end,
                           std::int64_t warmup_steps,
                           std::int64_t total_steps);

}  // namespace melssl::train

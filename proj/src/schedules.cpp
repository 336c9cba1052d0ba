// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/schedules.hpp"

#include <cmath>

namespace melssl::train {

void CosineSchedule::validate() const {
  if (total_steps < 1) throw ConfigError("schedule: total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw ConfigError("schedule: need 0 <= warmup_steps <= total_steps");
}

double cosine_value(const CosineSchedule& schedule, std::int64_t step) {
  schedule.validate();
  if (step < 0 || step > schedule.total_steps)
    throw ConfigError("cosine_value: step out of range");

  if (step < schedule.warmup_steps)
    return schedule.start_value * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);

  const auto span = schedule.total_steps - schedule.warmup_steps;
  if (span == 0) return schedule.end_value;
  // Endpoints returned directly so they are exact.
  if (step == schedule.warmup_steps) return schedule.start_value;
  if (step == schedule.total_steps) return schedule.end_value;

  const double tau = static_cast<double>(step - schedule.warmup_steps) /
                     static_cast<double>(span);
  return schedule.end_value + (schedule.start_value - schedule.end_value) *
                                  0.5 * (1.0 + std::cos(M_PI * tau));
}

ScheduleSet make_schedules(double peak_lr, double final_lr, double wd_start,
                           double wd_end, double m0, double m_end,
                           std::int64_t warmup_steps,
                           std::int64_t total_steps) {
  ScheduleSet set;
  set.lr = {peak_lr, final_lr, warmup_steps, total_steps};
  set.weight_decay = {wd_start, wd_end, 0, total_steps};
  set.ema_decay = {m0, m_end, 0, total_steps};
  set.lr.validate();
  set.weight_decay.validate();
  set.ema_decay.validate();
  return set;
}

}  // namespace melssl::train

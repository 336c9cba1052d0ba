// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/checkpoint.hpp"
#include "melssl/optimizer.hpp"
#include "melssl/schedules.hpp"
#include "melssl/ssl.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace melssl::train {

/** Everything a pre-training run needs besides the data itself. */
struct PretrainSettings {
  views::SegmentPairConfig pair;
  views::AugmentConfig augment;
  encoder::EncoderConfig encoder;
  ssl::HeadConfig heads;
  ssl::SslOptions ssl_options;
  AdamWConfig adamw;
  bool ema_bn_buffers = true;  // false copies student BN stats instead

  double peak_lr = 5e-4;
  double final_lr = 1e-6;
  double wd_start = 0.04;
  double wd_end = 0.4;
  double m0 = 0.99;
  double m_end = 1.0;  // 0 with m0 = 0 pins the teacher to the student
  int warmup_epochs = 10;

  int batch_size = 1536;
  int epochs = 300;
  std::uint64_t seed = 0;
  int diag_every_steps = 50;
  int diag_probe_size = 16;
  int checkpoint_every_steps = 0;  // 0: only final

  void validate() const;
};

/** Collapse instrumentation over a probe batch of teacher projections. */
struct CollapseReport {
  double mean_pairwise_cosine = 0.0;
  double embed_std = 0.0;  // mean over dimensions of per-dim std
  double loss = 0.0;
};

struct StepMetrics {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wd = 0.0;
  double m = 0.0;
  std::optional<CollapseReport> diagnostics;
};

/**
 * Owns the training state: student/teacher parameters, optimizer moments,
 * memory bank, step counter, schedules. Sample order and augmentation
 * draws are pure functions of (seed, epoch, clip index), which is what
 * makes checkpoint resume bit-exact: the memory bank is rebuilt by
 * replaying the crop history.
 */
class Trainer {
 public:
  Trainer(PretrainSettings settings, std::vector<Matrix> normalized_mels,
          std::string config_hash);

  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t step() const { return step_; }
  const ScheduleSet& schedules() const { return schedules_; }
  ssl::StudentParams& student() { return student_; }
  ssl::TeacherParams& teacher() { return teacher_; }
  const PretrainSettings& settings() const { return settings_; }

  /** Runs one optimizer step; returns its metrics. */
  StepMetrics train_step();

  bool done() const { return step_ >= total_steps_; }

  using MetricsCallback = std::function<void(const StepMetrics&)>;

  /** Runs to completion (or max_steps if >= 0). */
  void run(const MetricsCallback& on_step, std::int64_t max_steps = -1);

  CollapseReport collapse_diagnostics(double current_loss);

  void save(const std::string& path) const;

  /** Restores a checkpoint produced with the same config hash. */
  void load(const std::string& path);

  /** Deterministic center-cropped probe segments (no augmentation). */
  std::vector<Matrix> probe_segments(int count) const;

 private:
  struct BatchPlan {
    std::int64_t epoch = 0;
    std::vector<int> clip_indices;
  };
  BatchPlan plan_for_step(std::int64_t step) const;
  std::vector<views::ViewPair> make_views(const BatchPlan& plan);
  void rebuild_bank();
  std::vector<nn::Param*> student_params();

  PretrainSettings settings_;
  std::vector<Matrix> mels_;
  std::string config_hash_;

  ssl::StudentParams student_;
  ssl::TeacherParams teacher_;
  AdamW adamw_;
  ScheduleSet schedules_;
  views::MemoryBank bank_;
  std::int64_t steps_per_epoch_ = 0;
  std::int64_t total_steps_ = 0;
  std::int64_t step_ = 0;
  double last_loss_ = 0.0;
};

/** Clip loader: wav -> resample -> log-mel -> min-max normalize. */
Matrix load_normalized_mel(const std::string& wav_path,
                           const dsp::MelParams& mel_params,
                           const dsp::GlobalStats& stats, int target_rate);

std::vector<Matrix> load_normalized_mels(const std::vector<std::string>& paths,
                                         const dsp::MelParams& mel_params,
                                         const dsp::GlobalStats& stats,
                                         int target_rate);

}  // namespace melssl::train

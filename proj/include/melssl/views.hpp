// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/dsp.hpp"
#include "melssl/rng.hpp"

#include <deque>

namespace melssl::views {

using dsp::MelSpec;

/** Two-segment cropping policy for positive-pair creation. */
struct SegmentPairConfig {
  double segment_len_s = 6.0;
  bool use_two_segments = true;
  double clip_len_s = 10.0;

  void validate() const;
};

/** Mixup + random-resized-crop settings. */
struct AugmentConfig {
  double mixup_alpha = 0.4;
  int memory_size = 2048;
  double rrc_freq_scale_lo = 0.6;
  double rrc_freq_scale_hi = 1.5;
  double rrc_time_scale_lo = 0.6;
  double rrc_time_scale_hi = 1.5;
  bool mixup_before_rrc = true;

  void validate() const;
};

/** FIFO of recent segments that mixup draws its mixing partners from. */
class MemoryBank {
 public:
  explicit MemoryBank(int capacity);

  void push(const Matrix& segment);
  std::size_t size() const { return buffer_.size(); }
  int capacity() const { return capacity_; }
  const Matrix& at(std::size_t i) const { return buffer_[i]; }

 private:
  std::deque<Matrix> buffer_;
  int capacity_;
};

/** A positive pair: two augmented views of the same clip. */
struct ViewPair {
  MelSpec x;
  MelSpec x_prime;
  double overlap_s = 0.0;  // can be negative when short segments do not meet
};

struct SegmentPair {
  MelSpec a;
  MelSpec b;
  double overlap_s = 0.0;
};

/**
 * Crops two segments at independent uniform offsets (frame granularity).
 * overlap_s = segment_len_s - |start_a - start_b|.
 */
SegmentPair sample_segment_pair(const MelSpec& spec,
                                const SegmentPairConfig& cfg, Rng& rng);

/**
 * Mixes the segment with a random memory-bank entry in the linear
 * amplitude domain: log((1-lambda) exp(seg) + lambda exp(entry)),
 * lambda ~ U(0, alpha). The incoming segment is pushed afterwards.
 */
MelSpec mixup_augment(const MelSpec& seg, MemoryBank& bank, double alpha,
                      Rng& rng);

/**
 * Random resized crop: samples frequency/time scale factors, crops a
 * region of that relative size (edge-replicated when it spills past the
 * borders) and bilinearly resizes back to the input shape.
 */
MelSpec rrc_augment(const MelSpec& seg, const AugmentConfig& cfg, Rng& rng);

/** Segment pair + independent per-segment augmentation. */
ViewPair create_views(const MelSpec& spec, const SegmentPairConfig& pair_cfg,
                      const AugmentConfig& aug_cfg, MemoryBank& bank, Rng& rng);

}  // namespace melssl::views

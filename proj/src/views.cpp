// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/views.hpp"

#include <algorithm>
#include <cmath>

namespace melssl::views {

void SegmentPairConfig::validate() const {
  if (!(segment_len_s > 0) || !(clip_len_s > 0))
    throw ConfigError("views: segment/clip lengths must be > 0");
  if (segment_len_s > clip_len_s)
    throw ConfigError("views: segment_len_s must be <= clip_len_s");
}

void AugmentConfig::validate() const {
  if (mixup_alpha < 0.0 || mixup_alpha > 1.0)
    throw ConfigError("views: mixup_alpha must be in [0, 1]");
  if (memory_size < 1) throw ConfigError("views: memory_size must be >= 1");
  if (!(0 < rrc_freq_scale_lo && rrc_freq_scale_lo <= rrc_freq_scale_hi))
    throw ConfigError("views: bad rrc frequency-scale range");
  if (!(0 < rrc_time_scale_lo && rrc_time_scale_lo <= rrc_time_scale_hi))
    throw ConfigError("views: bad rrc time-scale range");
}

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("memory bank: capacity must be >= 1");
}

void MemoryBank::push(const Matrix& segment) {
  buffer_.push_back(segment);
  while (buffer_.size() > static_cast<std::size_t>(capacity_))
    buffer_.pop_front();
}

SegmentPair sample_segment_pair(const MelSpec& spec,
                                const SegmentPairConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto seg_frames = static_cast<Eigen::Index>(
      std::lround(cfg.segment_len_s / spec.frame_hop_s));
  if (seg_frames < 1 || seg_frames > spec.frames())
    throw DataError("sample_segment_pair: spec shorter than segment");

  const Eigen::Index max_start = spec.frames() - seg_frames;
  const auto start_a =
      static_cast<Eigen::Index>(rng.uniform_int(0, max_start));
  const Eigen::Index start_b =
      cfg.use_two_segments
          ? static_cast<Eigen::Index>(rng.uniform_int(0, max_start))
          : start_a;

  SegmentPair pair;
  pair.a.frame_hop_s = spec.frame_hop_s;
  pair.b.frame_hop_s = spec.frame_hop_s;
  pair.a.values = spec.values.middleRows(start_a, seg_frames);
  pair.b.values = spec.values.middleRows(start_b, seg_frames);
  pair.overlap_s = cfg.segment_len_s -
                   std::abs(static_cast<double>(start_a - start_b)) *
                       spec.frame_hop_s;
  return pair;
}

MelSpec mixup_augment(const MelSpec& seg, MemoryBank& bank, double alpha,
                      Rng& rng) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("mixup: alpha must be in [0, 1]");

  MelSpec out;
  out.frame_hop_s = seg.frame_hop_s;

  const double lambda = rng.uniform(0.0, alpha);

  // Entries with a different shape are skipped (the bank is meant to hold
  // fixed-shape segments; shape changes can occur across config switches).
  std::vector<std::size_t> candidates;
  candidates.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i)
    if (bank.at(i).rows() == seg.values.rows() &&
        bank.at(i).cols() == seg.values.cols())
      candidates.push_back(i);

  if (candidates.empty() || lambda == 0.0) {
    out.values = seg.values;
  } else {
    const auto pick = candidates[static_cast<std::size_t>(rng.uniform_int(
        0, static_cast<std::int64_t>(candidates.size()) - 1))];
    const Matrix& entry = bank.at(pick);
    out.values = ((1.0 - lambda) * seg.values.array().exp() +
                  lambda * entry.array().exp())
                     .log();
  }
  bank.push(seg.values);
  return out;
}

namespace {

// Edge-replicated read.
double at_clamped(const Matrix& m, Eigen::Index r, Eigen::Index c) {
  r = std::clamp<Eigen::Index>(r, 0, m.rows() - 1);
  c = std::clamp<Eigen::Index>(c, 0, m.cols() - 1);
  return m(r, c);
}

// Bilinear sample of the crop window [r0, r0+crop_rows) x [c0, c0+crop_cols)
// resized to out_rows x out_cols (align-corners mapping).
Matrix crop_resize(const Matrix& src, Eigen::Index r0, Eigen::Index c0,
                   Eigen::Index crop_rows, Eigen::Index crop_cols,
                   Eigen::Index out_rows, Eigen::Index out_cols) {
  Matrix out(out_rows, out_cols);
  const double row_step =
      out_rows > 1 ? static_cast<double>(crop_rows - 1) / (out_rows - 1) : 0.0;
  const double col_step =
      out_cols > 1 ? static_cast<double>(crop_cols - 1) / (out_cols - 1) : 0.0;
  for (Eigen::Index i = 0; i < out_rows; ++i) {
    const double fr = static_cast<double>(r0) + row_step * static_cast<double>(i);
    const auto ri = static_cast<Eigen::Index>(std::floor(fr));
    const double wr = fr - static_cast<double>(ri);
    for (Eigen::Index j = 0; j < out_cols; ++j) {
      const double fc =
          static_cast<double>(c0) + col_step * static_cast<double>(j);
      const auto ci = static_cast<Eigen::Index>(std::floor(fc));
      const double wc = fc - static_cast<double>(ci);
      const double top = (1.0 - wc) * at_clamped(src, ri, ci) +
                         wc * at_clamped(src, ri, ci + 1);
      const double bot = (1.0 - wc) * at_clamped(src, ri + 1, ci) +
                         wc * at_clamped(src, ri + 1, ci + 1);
      out(i, j) = (1.0 - wr) * top + wr * bot;
    }
  }
  return out;
}

}  // namespace

MelSpec rrc_augment(const MelSpec& seg, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (seg.values.size() == 0) throw DataError("rrc: empty input");

  const Eigen::Index n_frames = seg.values.rows();
  const Eigen::Index n_bins = seg.values.cols();

  const double time_scale = rng.uniform(cfg.rrc_time_scale_lo, cfg.rrc_time_scale_hi);
  const double freq_scale = rng.uniform(cfg.rrc_freq_scale_lo, cfg.rrc_freq_scale_hi);

  const auto crop_frames = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::lround(time_scale * static_cast<double>(n_frames))));
  const auto crop_bins = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::lround(freq_scale * static_cast<double>(n_bins))));

  // Crops larger than the input slide over an edge-replicated canvas.
  const Eigen::Index t_lo = std::min<Eigen::Index>(0, n_frames - crop_frames);
  const Eigen::Index t_hi = std::max<Eigen::Index>(0, n_frames - crop_frames);
  const Eigen::Index f_lo = std::min<Eigen::Index>(0, n_bins - crop_bins);
  const Eigen::Index f_hi = std::max<Eigen::Index>(0, n_bins - crop_bins);

  const auto t0 = static_cast<Eigen::Index>(rng.uniform_int(t_lo, t_hi));
  const auto f0 = static_cast<Eigen::Index>(rng.uniform_int(f_lo, f_hi));

  MelSpec out;
  out.frame_hop_s = seg.frame_hop_s;
  out.values = crop_resize(seg.values, t0, f0, crop_frames, crop_bins,
                           n_frames, n_bins);
  return out;
}

ViewPair create_views(const MelSpec& spec, const SegmentPairConfig& pair_cfg,
                      const AugmentConfig& aug_cfg, MemoryBank& bank,
                      Rng& rng) {
  aug_cfg.validate();
  Rng crop_rng = rng.derive("crop");
  SegmentPair pair = sample_segment_pair(spec, pair_cfg, crop_rng);

  ViewPair views;
  views.overlap_s = pair.overlap_s;

  const MelSpec* segments[2] = {&pair.a, &pair.b};
  MelSpec* outputs[2] = {&views.x, &views.x_prime};
  for (int i = 0; i < 2; ++i) {
    Rng mix_rng = rng.derive("mixup", static_cast<std::uint64_t>(i));
    Rng rrc_rng = rng.derive("rrc", static_cast<std::uint64_t>(i));
    if (aug_cfg.mixup_before_rrc) {
      MelSpec mixed = mixup_augment(*segments[i], bank, aug_cfg.mixup_alpha, mix_rng);
      *outputs[i] = rrc_augment(mixed, aug_cfg, rrc_rng);
    } else {
      MelSpec cropped = rrc_augment(*segments[i], aug_cfg, rrc_rng);
      *outputs[i] = mixup_augment(cropped, bank, aug_cfg.mixup_alpha, mix_rng);
    }
  }
  return views;
}

}  // namespace melssl::views

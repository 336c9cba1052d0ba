// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace melssl::dsp {

/** Mono waveform with its sample rate. */
struct WaveClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WindowKind { Hamming, Hann };

/** Log-mel analysis parameters. */
struct MelParams {
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_bins = 64;
  double f_min = 60.0;
  double f_max = 7800.0;
  WindowKind window_kind = WindowKind::Hamming;
  double log_floor = 1e-10;

  void validate(int sample_rate) const;
  std::uint64_t hash() const;
};

/**
 * Log-mel spectrogram, frames (rows) by mel bins (columns).
 * Values are natural log of mel-filtered power.
 */
struct MelSpec {
  Matrix values;  // L x C
  double frame_hop_s = 0.010;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bins() const { return values.cols(); }
};

/** Elementwise min/max over a whole dataset's mel values. */
struct GlobalStats {
  double min_val = 0.0;
  double max_val = 0.0;
  std::int64_t n_frames_seen = 0;
  std::uint64_t mel_params_hash = 0;

  void validate() const;
};

/** Band-limited resampling (windowed-sinc). Identity when rates match. */
WaveClip resample(const WaveClip& clip, int target_rate);

/** Frame count for a clip: 1 + floor((n_samples - window) / hop), no padding. */
Eigen::Index frame_count(std::size_t n_samples, int sample_rate,
                         const MelParams& params);

MelSpec mel_spectrogram(const WaveClip& clip, const MelParams& params);

/** Streamed elementwise min/max; merge() supports parallel partial reductions. */
class StatsAccumulator {
 public:
  explicit StatsAccumulator(std::uint64_t mel_params_hash)
      : stats_{1e300, -1e300, 0, mel_params_hash} {}

  void add(const MelSpec& spec);
  void merge(const StatsAccumulator& other);
  GlobalStats finish() const;

 private:
  GlobalStats stats_;
};

GlobalStats compute_global_stats(const std::vector<MelSpec>& dataset);
GlobalStats compute_global_stats(
    const std::function<bool(MelSpec&)>& next_clip, std::uint64_t params_hash);

/** Affine min-max map; out-of-range inputs pass through un-clipped. */
MelSpec normalize(const MelSpec& spec, const GlobalStats& stats);
MelSpec denormalize(const MelSpec& spec, const GlobalStats& stats);

void save_stats(const GlobalStats& stats, const std::string& path);
GlobalStats load_stats(const std::string& path);

/** In-place radix-2 FFT over interleaved complex data; n must be a power of 2. */
void fft_complex(std::vector<double>& re, std::vector<double>& im, bool inverse);

/** Power spectrum of a real frame zero-padded to n_fft (n_fft/2+1 bins). */
std::vector<double> power_spectrum(const std::vector<double>& frame, int n_fft);

/** Triangular area-normalized mel filterbank, n_bins x (n_fft/2+1). */
Matrix mel_filterbank(int n_bins, int n_fft, int sample_rate, double f_min,
                      double f_max);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace melssl::dsp

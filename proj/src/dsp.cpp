// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/dsp.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace melssl::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) {
    const double x = 2.0 * kPi * n / (length - 1);
    switch (kind) {
      case WindowKind::Hamming:
        w[static_cast<std::size_t>(n)] = 0.54 - 0.46 * std::cos(x);
        break;
      case WindowKind::Hann:
        w[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(x);
        break;
    }
  }
  return w;
}

}  // namespace

void MelParams::validate(int sample_rate) const {
  if (window_s <= 0 || hop_s <= 0) throw ConfigError("mel: window/hop must be > 0");
  if (hop_s > window_s) throw ConfigError("mel: hop_s must be <= window_s");
  if (n_bins < 1) throw ConfigError("mel: n_bins must be >= 1");
  if (!(0 < f_min && f_min < f_max && f_max <= sample_rate / 2.0))
    throw ConfigError("mel: need 0 < f_min < f_max <= sample_rate/2");
}

std::uint64_t MelParams::hash() const {
  std::ostringstream os;
  os << window_s << '|' << hop_s << '|' << n_bins << '|' << f_min << '|'
     << f_max << '|' << static_cast<int>(window_kind) << '|' << log_floor;
  return fnv1a64(os.str());
}

void GlobalStats::validate() const {
  if (n_frames_seen <= 0) throw DataError("stats: no frames seen");
  if (!(min_val < max_val)) throw DataError("stats: min must be < max");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

void fft_complex(std::vector<double>& re, std::vector<double>& im,
                 bool inverse) {
  const std::size_t n = re.size();
  if (n != im.size() || n == 0 || (n & (n - 1)) != 0)
    throw ConfigError("fft: size must be a nonzero power of 2");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
  if (inverse) {
    for (std::size_t i = 0; i < n; ++i) {
      re[i] /= static_cast<double>(n);
      im[i] /= static_cast<double>(n);
    }
  }
}

std::vector<double> power_spectrum(const std::vector<double>& frame,
                                   int n_fft) {
  std::vector<double> re(static_cast<std::size_t>(n_fft), 0.0);
  std::vector<double> im(static_cast<std::size_t>(n_fft), 0.0);
  std::copy(frame.begin(), frame.end(), re.begin());
  fft_complex(re, im, false);
  std::vector<double> power(static_cast<std::size_t>(n_fft / 2 + 1));
  for (std::size_t k = 0; k < power.size(); ++k)
    power[k] = re[k] * re[k] + im[k] * im[k];
  return power;
}

Matrix mel_filterbank(int n_bins, int n_fft, int sample_rate, double f_min,
                      double f_max) {
  const int n_freqs = n_fft / 2 + 1;
  const double mel_min = hz_to_mel(f_min);
  const double mel_max = hz_to_mel(f_max);

  std::vector<double> hz_pts(static_cast<std::size_t>(n_bins) + 2);
  for (std::size_t i = 0; i < hz_pts.size(); ++i)
    hz_pts[i] = mel_to_hz(mel_min + (mel_max - mel_min) * static_cast<double>(i) /
                                        (n_bins + 1));

  Matrix fb = Matrix::Zero(n_bins, n_freqs);
  for (int m = 0; m < n_bins; ++m) {
    const double lo = hz_pts[static_cast<std::size_t>(m)];
    const double mid = hz_pts[static_cast<std::size_t>(m) + 1];
    const double hi = hz_pts[static_cast<std::size_t>(m) + 2];
    const double area_norm = 2.0 / (hi - lo);
    for (int k = 0; k < n_freqs; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double v = 0.0;
      if (f > lo && f < mid)
        v = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        v = (hi - f) / (hi - mid);
      fb(m, k) = v * area_norm;
    }
  }
  return fb;
}

WaveClip resample(const WaveClip& clip, int target_rate) {
  if (clip.samples.empty()) throw DataError("resample: empty clip");
  if (target_rate <= 0) throw ConfigError("resample: target rate must be > 0");
  if (clip.sample_rate == target_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  // Low-pass at the smaller Nyquist; Hann-windowed sinc, 32 zero crossings.
  const double cutoff = std::min(1.0, ratio);
  const int zero_crossings = 32;
  const double half_width = zero_crossings / cutoff;

  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * ratio));

  WaveClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);

  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;  // position in input
    const auto k_lo = static_cast<std::int64_t>(std::ceil(t - half_width));
    const auto k_hi = static_cast<std::int64_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(k_lo, 0);
         k <= std::min(k_hi, n_in - 1); ++k) {
      const double x = t - static_cast<double>(k);
      double sinc = cutoff;
      if (x != 0.0) sinc = std::sin(kPi * cutoff * x) / (kPi * x);
      const double win = 0.5 + 0.5 * std::cos(kPi * x / half_width);
      acc += clip.samples[static_cast<std::size_t>(k)] * sinc * win;
    }
    out.samples[n] = acc;
  }
  return out;
}

Eigen::Index frame_count(std::size_t n_samples, int sample_rate,
                         const MelParams& params) {
  const auto win = static_cast<std::size_t>(
      std::lround(params.window_s * sample_rate));
  const auto hop = static_cast<std::size_t>(
      std::lround(params.hop_s * sample_rate));
  if (n_samples < win) return 0;
  return static_cast<Eigen::Index>(1 + (n_samples - win) / hop);
}

MelSpec mel_spectrogram(const WaveClip& clip, const MelParams& params) {
  params.validate(clip.sample_rate);
  const int win = static_cast<int>(std::lround(params.window_s * clip.sample_rate));
  const int hop = static_cast<int>(std::lround(params.hop_s * clip.sample_rate));
  const Eigen::Index n_frames = frame_count(clip.samples.size(),
                                            clip.sample_rate, params);
  if (n_frames < 1)
    throw DataError("mel_spectrogram: clip shorter than one analysis window");

  const int n_fft = next_pow2(win);
  const auto window = make_window(params.window_kind, win);
  const Matrix fb = mel_filterbank(params.n_bins, n_fft, clip.sample_rate,
                                   params.f_min, params.f_max);

  MelSpec spec;
  spec.frame_hop_s = params.hop_s;
  spec.values.resize(n_frames, params.n_bins);

  std::vector<double> frame(static_cast<std::size_t>(win));
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    const auto start = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < win; ++i)
      frame[static_cast<std::size_t>(i)] =
          clip.samples[start + static_cast<std::size_t>(i)] *
          window[static_cast<std::size_t>(i)];
    const auto power = power_spectrum(frame, n_fft);
    const Eigen::Map<const Vector> p(power.data(),
                                     static_cast<Eigen::Index>(power.size()));
    spec.values.row(t) =
        ((fb * p).array() + params.log_floor).log().transpose();
  }
  if (!all_finite(spec.values))
    throw NumericalError("mel_spectrogram: non-finite output");
  return spec;
}

void StatsAccumulator::add(const MelSpec& spec) {
  if (spec.values.size() == 0) return;
  stats_.min_val = std::min(stats_.min_val, spec.values.minCoeff());
  stats_.max_val = std::max(stats_.max_val, spec.values.maxCoeff());
  stats_.n_frames_seen += spec.frames();
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  stats_.min_val = std::min(stats_.min_val, other.stats_.min_val);
  stats_.max_val = std::max(stats_.max_val, other.stats_.max_val);
  stats_.n_frames_seen += other.stats_.n_frames_seen;
}

GlobalStats StatsAccumulator::finish() const {
  if (stats_.n_frames_seen == 0)
    throw DataError("compute_global_stats: empty stream");
  if (!(stats_.min_val < stats_.max_val))
    throw DataError("compute_global_stats: degenerate stream (min == max)");
  return stats_;
}

GlobalStats compute_global_stats(const std::vector<MelSpec>& dataset) {
  StatsAccumulator acc(0);
  for (const auto& spec : dataset) acc.add(spec);
  return acc.finish();
}

GlobalStats compute_global_stats(
    const std::function<bool(MelSpec&)>& next_clip, std::uint64_t params_hash) {
  StatsAccumulator acc(params_hash);
  MelSpec spec;
  while (next_clip(spec)) acc.add(spec);
  return acc.finish();
}

MelSpec normalize(const MelSpec& spec, const GlobalStats& stats) {
  stats.validate();
  MelSpec out;
  out.frame_hop_s = spec.frame_hop_s;
  out.values = (spec.values.array() - stats.min_val) /
               (stats.max_val - stats.min_val);
  return out;
}

MelSpec denormalize(const MelSpec& spec, const GlobalStats& stats) {
  stats.validate();
  MelSpec out;
  out.frame_hop_s = spec.frame_hop_s;
  out.values =
      spec.values.array() * (stats.max_val - stats.min_val) + stats.min_val;
  return out;
}

void save_stats(const GlobalStats& stats, const std::string& path) {
  nlohmann::json j;
  j["min"] = stats.min_val;
  j["max"] = stats.max_val;
  j["n_frames_seen"] = stats.n_frames_seen;
  j["mel_params_hash"] = hash_hex(stats.mel_params_hash);
  std::ofstream out(path);
  if (!out) throw DataError("save_stats: cannot write " + path);
  out << j.dump(2) << "\n";
}

GlobalStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_stats: cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_stats: malformed file " + path + ": " + e.what());
  }
  GlobalStats stats;
  stats.min_val = j.at("min").get<double>();
  stats.max_val = j.at("max").get<double>();
  stats.n_frames_seen = j.at("n_frames_seen").get<std::int64_t>();
  stats.mel_params_hash =
      std::stoull(j.at("mel_params_hash").get<std::string>(), nullptr, 16);
  stats.validate();
  return stats;
}

}  // namespace melssl::dsp

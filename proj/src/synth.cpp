// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/synth.hpp"

#include "melssl/wav_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

namespace melssl::synth {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kPeak = 0.5;
constexpr double kNoiseFloorDb = -40.0;
}  // namespace

void SynthSpec::validate() const {
  if (n_clips < 1) throw ConfigError("synth: n_clips must be >= 1");
  if (clip_len_s <= 0) throw ConfigError("synth: clip_len_s must be > 0");
  if (classes.size() < 2) throw ConfigError("synth: need >= 2 classes");
  if (folds < 0) throw ConfigError("synth: folds must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("synth: train_fraction must be in (0, 1)");
  for (const auto& c : classes)
    if (!(0 < c.f_lo && c.f_lo <= c.f_hi && c.f_hi < sample_rate / 2.0))
      throw ConfigError("synth: class frequency range out of bounds");
}

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "pure_tone") return GeneratorKind::pure_tone;
  if (name == "chirp") return GeneratorKind::chirp;
  if (name == "noise_band") return GeneratorKind::noise_band;
  if (name == "am_tone") return GeneratorKind::am_tone;
  throw ConfigError("synth: unknown generator kind: " + name);
}

std::string generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::pure_tone: return "pure_tone";
    case GeneratorKind::chirp: return "chirp";
    case GeneratorKind::noise_band: return "noise_band";
    case GeneratorKind::am_tone: return "am_tone";
  }
  return "unknown";
}

std::vector<ClassSpec> default_classes() {
  // The classes share one frequency band and differ in temporal structure,
  // so mean spectral energy alone does not separate them.
  ClassSpec tone;
  tone.kind = GeneratorKind::pure_tone;
  ClassSpec chirp;
  chirp.kind = GeneratorKind::chirp;
  chirp.octaves = 1.0;
  ClassSpec am;
  am.kind = GeneratorKind::am_tone;
  return {tone, chirp, am};
}

dsp::WaveClip generate_clip(const SynthSpec& spec, int class_id,
                            std::uint64_t clip_index) {
  spec.validate();
  if (class_id < 0 || class_id >= static_cast<int>(spec.classes.size()))
    throw ConfigError("synth: class id out of range");
  const ClassSpec& cls = spec.classes[static_cast<std::size_t>(class_id)];

  Rng rng = Rng(spec.seed).derive("clip", clip_index);
  const auto n = static_cast<std::size_t>(
      std::llround(spec.clip_len_s * spec.sample_rate));
  const double dt = 1.0 / spec.sample_rate;

  // Log-uniform base frequency within the class band.
  const double f0 =
      std::exp(rng.uniform(std::log(cls.f_lo), std::log(cls.f_hi)));
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);

  dsp::WaveClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);

  switch (cls.kind) {
    case GeneratorKind::pure_tone: {
      for (std::size_t i = 0; i < n; ++i)
        clip.samples[i] = std::sin(2.0 * kPi * f0 * (static_cast<double>(i) * dt) + phase0);
      break;
    }
    case GeneratorKind::chirp: {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double k = std::pow(2.0, sign * cls.octaves);
      // keep the swept band inside the class range
      const double start = sign > 0 ? std::min(f0, cls.f_hi / k)
                                    : std::max(f0, cls.f_lo / k);
      const double total = spec.clip_len_s;
      const double lnk = std::log(k);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double phase =
            2.0 * kPi * start * total / lnk * (std::pow(k, t / total) - 1.0);
        clip.samples[i] = std::sin(phase + phase0);
      }
      break;
    }
    case GeneratorKind::noise_band: {
      const double width = cls.bandwidth * f0;
      const double lo = std::max(10.0, f0 - width / 2.0);
      const double hi = f0 + width / 2.0;
      constexpr int kComponents = 64;
      std::vector<double> freqs(kComponents), phases(kComponents);
      for (int c = 0; c < kComponents; ++c) {
        freqs[static_cast<std::size_t>(c)] = rng.uniform(lo, hi);
        phases[static_cast<std::size_t>(c)] = rng.uniform(0.0, 2.0 * kPi);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        double acc = 0.0;
        for (int c = 0; c < kComponents; ++c)
          acc += std::sin(2.0 * kPi * freqs[static_cast<std::size_t>(c)] * t +
                          phases[static_cast<std::size_t>(c)]);
        clip.samples[i] = acc;
      }
      break;
    }
    case GeneratorKind::am_tone: {
      const double rate = rng.uniform(cls.mod_lo, cls.mod_hi);
      const double mod_phase = rng.uniform(0.0, 2.0 * kPi);
      constexpr double kDepth = 0.85;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double env =
            (1.0 - kDepth) +
            kDepth * 0.5 * (1.0 + std::sin(2.0 * kPi * rate * t + mod_phase));
        clip.samples[i] = env * std::sin(2.0 * kPi * f0 * t + phase0);
      }
      break;
    }
  }

  // Peak-normalize, then add the noise floor so loudness is uninformative.
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : clip.samples) s *= kPeak / peak;
  const double noise_amp = kPeak * std::pow(10.0, kNoiseFloorDb / 20.0);
  Rng noise_rng = rng.derive("noise");
  for (double& s : clip.samples)
    s += noise_amp * (2.0 * noise_rng.uniform() - 1.0);
  return clip;
}

data::Manifest generate_corpus(const SynthSpec& spec,
                               const std::string& out_dir,
                               const std::string& header_json) {
  spec.validate();
  std::filesystem::create_directories(out_dir);

  const auto n_classes = static_cast<int>(spec.classes.size());
  data::Manifest manifest;
  manifest.header_json = header_json;
  std::vector<int> per_class_count(static_cast<std::size_t>(n_classes), 0);

  // Greedy largest-deficit split assignment per class: hits the target
  // fractions exactly in the limit and covers every split from 3 items up.
  const double targets[3] = {spec.train_fraction,
                             (1.0 - spec.train_fraction) / 2.0,
                             (1.0 - spec.train_fraction) / 2.0};
  const char* split_names[3] = {"train", "valid", "test"};
  std::vector<std::array<int, 3>> split_counts(
      static_cast<std::size_t>(n_classes), {0, 0, 0});
  auto next_split = [&](int class_id) {
    auto& counts = split_counts[static_cast<std::size_t>(class_id)];
    int best = 0;
    double best_ratio = 1e300;
    for (int s = 0; s < 3; ++s) {
      const double ratio = counts[static_cast<std::size_t>(s)] / targets[s];
      if (ratio < best_ratio - 1e-12) {
        best_ratio = ratio;
        best = s;
      }
    }
    ++counts[static_cast<std::size_t>(best)];
    return split_names[best];
  };

  for (int i = 0; i < spec.n_clips; ++i) {
    const int class_id = i % n_classes;
    const int j = per_class_count[static_cast<std::size_t>(class_id)]++;

    const auto clip =
        generate_clip(spec, class_id, static_cast<std::uint64_t>(i));
    char name[64];
    std::snprintf(name, sizeof(name), "clip_%05d_c%d.wav", i, class_id);
    dsp::write_wav((std::filesystem::path(out_dir) / name).string(), clip);

    data::ManifestEntry entry;
    entry.path = name;  // relative to the manifest
    entry.label = class_id;
    if (spec.folds > 0) entry.fold = j % spec.folds;
    entry.split = next_split(class_id);
    manifest.entries.push_back(std::move(entry));
  }

  data::write_manifest(manifest,
                       (std::filesystem::path(out_dir) / "manifest.jsonl").string());
  // The file keeps relative paths so the corpus stays relocatable; the
  // returned copy is resolved for immediate use.
  for (auto& entry : manifest.entries)
    entry.path = (std::filesystem::path(out_dir) / entry.path).string();
  return manifest;
}

}  // namespace melssl::synth

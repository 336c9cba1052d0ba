// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/dsp.hpp"
#include "melssl/manifest.hpp"
#include "melssl/rng.hpp"

#include <string>
#include <vector>

namespace melssl::synth {

enum class GeneratorKind { pure_tone, chirp, noise_band, am_tone };

/** Per-class generator: a kind plus the ranges its parameters draw from. */
struct ClassSpec {
  GeneratorKind kind = GeneratorKind::pure_tone;
  double f_lo = 300.0;   // base frequency range (Hz)
  double f_hi = 2400.0;
  double mod_lo = 2.0;   // am_tone modulation rate range (Hz)
  double mod_hi = 8.0;
  double octaves = 1.0;  // chirp sweep extent (log2), sign randomized
  double bandwidth = 0.5;  // noise_band width as a fraction of center
};

struct SynthSpec {
  int n_clips = 300;
  double clip_len_s = 10.0;
  int sample_rate = 16000;
  std::vector<ClassSpec> classes;
  std::uint64_t seed = 0;
  int folds = 0;               // 0: no fold ids
  double train_fraction = 0.6; // remaining mass split evenly valid/test

  void validate() const;
};

GeneratorKind parse_generator_kind(const std::string& name);
std::string generator_kind_name(GeneratorKind kind);

/** Three structure-distinct classes sharing one frequency band. */
std::vector<ClassSpec> default_classes();

/** One clip, peak-normalized to 0.5 with a -40 dB noise floor. */
dsp::WaveClip generate_clip(const SynthSpec& spec, int class_id,
                            std::uint64_t clip_index);

/**
 * Writes WAVs plus a JSON-lines manifest (balanced round-robin classes,
 * per-class round-robin splits/folds). Bit-reproducible from the seed.
 */
data::Manifest generate_corpus(const SynthSpec& spec,
                               const std::string& out_dir,
                               const std::string& header_json = "");

}  // namespace melssl::synth

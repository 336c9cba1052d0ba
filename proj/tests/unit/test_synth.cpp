// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/synth.hpp"

#include "melssl/wav_io.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace melssl;

namespace {

double spectral_centroid(const dsp::WaveClip& clip) {
  const auto spec = dsp::mel_spectrogram(clip, dsp::MelParams{});
  // Mean over frames of the linear-power-weighted mel bin center.
  double num = 0.0, den = 0.0;
  for (Eigen::Index t = 0; t < spec.frames(); ++t)
    for (Eigen::Index m = 0; m < spec.bins(); ++m) {
      const double p = std::exp(spec.values(t, m));
      num += p * static_cast<double>(m);
      den += p;
    }
  return num / den;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("synthetic corpus generation") {
  synth::SynthSpec spec;
  spec.n_clips = 12;
  spec.clip_len_s = 2.0;
  spec.classes = synth::default_classes();
  spec.seed = 77;
  spec.folds = 2;

  const auto base = std::filesystem::temp_directory_path() / "melssl_synth";
  std::filesystem::remove_all(base);

  SUBCASE("same seed twice gives a bit-identical corpus") {
    const auto dir_a = (base / "a").string();
    const auto dir_b = (base / "b").string();
    const auto man_a = synth::generate_corpus(spec, dir_a);
    const auto man_b = synth::generate_corpus(spec, dir_b);
    REQUIRE(man_a.entries.size() == man_b.entries.size());
    for (std::size_t i = 0; i < man_a.entries.size(); ++i) {
      const auto name =
          std::filesystem::path(man_a.entries[i].path).filename().string();
      CHECK(file_bytes((std::filesystem::path(dir_a) / name).string()) ==
            file_bytes((std::filesystem::path(dir_b) / name).string()));
    }
  }

  SUBCASE("round-robin class balance") {
    synth::SynthSpec balanced = spec;
    balanced.n_clips = 300;
    balanced.clip_len_s = 0.5;
    const auto dir = (base / "balanced").string();
    const auto manifest = synth::generate_corpus(balanced, dir);
    std::map<int, int> counts;
    for (const auto& e : manifest.entries) counts[*e.label]++;
    REQUIRE(counts.size() == 3);
    for (const auto& [label, count] : counts) CHECK(count == 100);
  }

  SUBCASE("all clips pass the dsp frontend and splits cover the corpus") {
    const auto dir = (base / "c").string();
    const auto manifest = synth::generate_corpus(spec, dir);
    int train = 0, valid = 0, test = 0;
    for (const auto& e : manifest.entries) {
      const auto clip = dsp::read_wav(e.path);
      CHECK(clip.sample_rate == 16000);
      CHECK_NOTHROW(dsp::mel_spectrogram(clip, dsp::MelParams{}));
      if (e.split == "train") ++train;
      if (e.split == "valid") ++valid;
      if (e.split == "test") ++test;
      CHECK(e.fold.has_value());
    }
    CHECK(train + valid + test == 12);
    CHECK(train > 0);
    CHECK(test > 0);
  }

  SUBCASE("per-class centroid ordering follows the configured bands") {
    synth::SynthSpec ordered;
    ordered.n_clips = 9;
    ordered.clip_len_s = 1.0;
    ordered.seed = 5;
    synth::ClassSpec low, mid, high;
    low.kind = synth::GeneratorKind::pure_tone;
    low.f_lo = 200;
    low.f_hi = 380;
    mid.kind = synth::GeneratorKind::pure_tone;
    mid.f_lo = 800;
    mid.f_hi = 1500;
    high.kind = synth::GeneratorKind::pure_tone;
    high.f_lo = 3000;
    high.f_hi = 6000;
    ordered.classes = {low, mid, high};

    double centroid[3] = {0, 0, 0};
    int count[3] = {0, 0, 0};
    for (int i = 0; i < ordered.n_clips; ++i) {
      const int cls = i % 3;
      const auto clip =
          synth::generate_clip(ordered, cls, static_cast<std::uint64_t>(i));
      centroid[cls] += spectral_centroid(clip);
      count[cls]++;
    }
    for (int c = 0; c < 3; ++c) centroid[c] /= count[c];
    CHECK(centroid[0] < centroid[1]);
    CHECK(centroid[1] < centroid[2]);
  }

  SUBCASE("manifest headers survive the round trip") {
    const auto dir = (base / "hdr").string();
    synth::generate_corpus(spec, dir, R"({"type":"header","note":"args"})");
    const auto manifest =
        data::read_manifest((std::filesystem::path(dir) / "manifest.jsonl").string());
    CHECK(manifest.header_json.find("header") != std::string::npos);
    CHECK(manifest.entries.size() == 12);
  }

  std::filesystem::remove_all(base);
}

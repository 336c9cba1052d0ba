// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Python bindings for the main operations: mel frontend, view creation,
// encoder, loss geometry, schedules, and metrics.

#include "melssl/checkpoint.hpp"
#include "melssl/config.hpp"
#include "melssl/eval.hpp"
#include "melssl/ssl.hpp"
#include "melssl/synth.hpp"
#include "melssl/train.hpp"
#include "melssl/views.hpp"
#include "melssl/wav_io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace melssl;

namespace {

dsp::WaveClip clip_from(const std::vector<double>& samples, int sample_rate) {
  dsp::WaveClip clip;
  clip.samples = samples;
  clip.sample_rate = sample_rate;
  return clip;
}

encoder::EncoderConfig config_from_kwargs(int n_blocks, int n_heads, int dim,
                                          int inner_dim, int stack_frames,
                                          int input_bins, int max_tokens) {
  encoder::EncoderConfig cfg;
  cfg.n_blocks = n_blocks;
  cfg.n_heads = n_heads;
  cfg.dim = dim;
  cfg.inner_dim = inner_dim;
  cfg.stack_frames = stack_frames;
  cfg.input_bins = input_bins;
  cfg.max_tokens = max_tokens;
  return cfg;
}

encoder::EmbeddingMode mode_from(const std::string& mode) {
  if (mode == "pretrain") return encoder::EmbeddingMode::pretrain;
  if (mode == "linear_eval") return encoder::EmbeddingMode::linear_eval;
  if (mode == "finetune") return encoder::EmbeddingMode::finetune;
  throw ConfigError("mode must be pretrain|linear_eval|finetune");
}

/** Seeded encoder handle exposing the forward paths. */
class PyEncoder {
 public:
  PyEncoder(const encoder::EncoderConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    state_ = encoder::init_encoder(cfg, rng);
  }

  static PyEncoder from_checkpoint(const std::string& path,
                                   const std::string& config_json) {
    const auto cfg = config::parse_config(config_json);
    PyEncoder enc(cfg.pretrain.encoder, cfg.pretrain.seed);
    const auto ckpt =
        train::load_checkpoint(path, config::config_hash(cfg));
    enc.state_.visit([&](const std::string& name, nn::Param& p) {
      const auto it = ckpt.tensors.find("teacher.encoder." + name);
      if (it == ckpt.tensors.end())
        throw DataError("checkpoint is missing teacher.encoder." + name);
      p.value = it->second;
    });
    return enc;
  }

  Matrix encode(const Matrix& mel) const {
    dsp::MelSpec spec;
    spec.values = mel;
    return encoder::encode(spec, state_).tokens;
  }

  Vector embed(const Matrix& mel, const std::string& mode) const {
    dsp::MelSpec spec;
    spec.values = mel;
    const auto m = mode_from(mode);
    const auto seq = encoder::encode(
        spec, state_, m == encoder::EmbeddingMode::linear_eval);
    return encoder::extract_embedding(seq, m).vector;
  }

  Vector chunk_and_embed(const Matrix& mel, const std::string& mode,
                         double chunk_s, double max_crop_s,
                         double hop_s) const {
    eval::TaskSpec task;
    task.n_classes = 2;  // metric fields unused here
    task.chunk_s = chunk_s;
    task.max_crop_s = max_crop_s;
    return eval::chunk_and_embed(mel, state_, mode_from(mode), task, hop_s);
  }

  std::int64_t param_count() const { return encoder::param_count(state_.cfg); }

 private:
  encoder::EncoderState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mel-domain self-supervised audio pre-training core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  py::class_<dsp::MelParams>(m, "MelParams")
      .def(py::init<>())
      .def_readwrite("window_s", &dsp::MelParams::window_s)
      .def_readwrite("hop_s", &dsp::MelParams::hop_s)
      .def_readwrite("n_bins", &dsp::MelParams::n_bins)
      .def_readwrite("f_min", &dsp::MelParams::f_min)
      .def_readwrite("f_max", &dsp::MelParams::f_max);

  m.def(
      "resample",
      [](const std::vector<double>& samples, int rate, int target_rate) {
        return dsp::resample(clip_from(samples, rate), target_rate).samples;
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));

  m.def(
      "mel_spectrogram",
      [](const std::vector<double>& samples, int rate,
         const dsp::MelParams& params) {
        return dsp::mel_spectrogram(clip_from(samples, rate), params).values;
      },
      py::arg("samples"), py::arg("sample_rate"),
      py::arg("params") = dsp::MelParams{});

  m.def(
      "global_stats",
      [](const std::vector<Matrix>& specs) {
        std::vector<dsp::MelSpec> wrapped;
        wrapped.reserve(specs.size());
        for (const auto& v : specs) wrapped.push_back({v, 0.01});
        const auto stats = dsp::compute_global_stats(wrapped);
        return py::make_tuple(stats.min_val, stats.max_val,
                              stats.n_frames_seen);
      },
      py::arg("specs"));

  m.def(
      "normalize",
      [](const Matrix& values, double min_val, double max_val) {
        dsp::GlobalStats stats{min_val, max_val, 1, 0};
        return dsp::normalize({values, 0.01}, stats).values;
      },
      py::arg("values"), py::arg("min_val"), py::arg("max_val"));

  m.def(
      "read_wav",
      [](const std::string& path) {
        const auto clip = dsp::read_wav(path);
        return py::make_tuple(clip.samples, clip.sample_rate);
      },
      py::arg("path"));

  m.def(
      "sample_segment_pair",
      [](const Matrix& values, double hop_s, double segment_len_s,
         double clip_len_s, bool use_two_segments, std::uint64_t seed) {
        views::SegmentPairConfig cfg;
        cfg.segment_len_s = segment_len_s;
        cfg.clip_len_s = clip_len_s;
        cfg.use_two_segments = use_two_segments;
        Rng rng(seed);
        const auto pair = views::sample_segment_pair({values, hop_s}, cfg, rng);
        return py::make_tuple(pair.a.values, pair.b.values, pair.overlap_s);
      },
      py::arg("values"), py::arg("hop_s") = 0.01,
      py::arg("segment_len_s") = 6.0, py::arg("clip_len_s") = 10.0,
      py::arg("use_two_segments") = true, py::arg("seed") = 0);

  m.def(
      "rrc_augment",
      [](const Matrix& values, double freq_lo, double freq_hi, double time_lo,
         double time_hi, std::uint64_t seed) {
        views::AugmentConfig cfg;
        cfg.rrc_freq_scale_lo = freq_lo;
        cfg.rrc_freq_scale_hi = freq_hi;
        cfg.rrc_time_scale_lo = time_lo;
        cfg.rrc_time_scale_hi = time_hi;
        Rng rng(seed);
        return views::rrc_augment({values, 0.01}, cfg, rng).values;
      },
      py::arg("values"), py::arg("freq_lo") = 0.6, py::arg("freq_hi") = 1.5,
      py::arg("time_lo") = 0.6, py::arg("time_hi") = 1.5, py::arg("seed") = 0);

  py::class_<views::MemoryBank>(m, "MemoryBank")
      .def(py::init<int>(), py::arg("capacity"))
      .def("push", &views::MemoryBank::push)
      .def("__len__", &views::MemoryBank::size);

  m.def(
      "mixup_augment",
      [](const Matrix& values, views::MemoryBank& bank, double alpha,
         std::uint64_t seed) {
        Rng rng(seed);
        return views::mixup_augment({values, 0.01}, bank, alpha, rng).values;
      },
      py::arg("values"), py::arg("bank"), py::arg("alpha") = 0.4,
      py::arg("seed") = 0);

  py::class_<encoder::EncoderConfig>(m, "EncoderConfig")
      .def(py::init(&config_from_kwargs), py::arg("n_blocks") = 12,
           py::arg("n_heads") = 6, py::arg("dim") = 384,
           py::arg("inner_dim") = 1536, py::arg("stack_frames") = 4,
           py::arg("input_bins") = 64, py::arg("max_tokens") = 150)
      .def_static("small", &encoder::EncoderConfig::small_preset)
      .def_static("base", &encoder::EncoderConfig::base_preset)
      .def_readwrite("n_blocks", &encoder::EncoderConfig::n_blocks)
      .def_readwrite("n_heads", &encoder::EncoderConfig::n_heads)
      .def_readwrite("dim", &encoder::EncoderConfig::dim)
      .def_readwrite("inner_dim", &encoder::EncoderConfig::inner_dim)
      .def_readwrite("stack_frames", &encoder::EncoderConfig::stack_frames)
      .def_readwrite("input_bins", &encoder::EncoderConfig::input_bins)
      .def_readwrite("max_tokens", &encoder::EncoderConfig::max_tokens);

  m.def("param_count", &encoder::param_count, py::arg("config"));

  py::class_<PyEncoder>(m, "Encoder")
      .def(py::init<const encoder::EncoderConfig&, std::uint64_t>(),
           py::arg("config"), py::arg("seed") = 0)
      .def_static("from_checkpoint", &PyEncoder::from_checkpoint,
                  py::arg("path"), py::arg("config_json"))
      .def("encode", &PyEncoder::encode, py::arg("mel"))
      .def("embed", &PyEncoder::embed, py::arg("mel"),
           py::arg("mode") = "pretrain")
      .def("chunk_and_embed", &PyEncoder::chunk_and_embed, py::arg("mel"),
           py::arg("mode") = "linear_eval", py::arg("chunk_s") = 6.0,
           py::arg("max_crop_s") = 12.0, py::arg("hop_s") = 0.01)
      .def("param_count", &PyEncoder::param_count);

  m.def("normalized_mse", &ssl::normalized_mse, py::arg("p"), py::arg("z"));

  m.def(
      "cosine_value",
      [](double start, double end, std::int64_t warmup, std::int64_t total,
         std::int64_t step) {
        return train::cosine_value({start, end, warmup, total}, step);
      },
      py::arg("start"), py::arg("end"), py::arg("warmup_steps"),
      py::arg("total_steps"), py::arg("step"));

  m.def(
      "accuracy",
      [](const Matrix& scores, const std::vector<int>& labels) {
        eval::PredictionSet preds;
        preds.scores = scores;
        preds.labels = labels;
        return eval::accuracy(preds);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "mean_average_precision",
      [](const Matrix& scores, const std::vector<std::vector<int>>& labels) {
        eval::PredictionSet preds;
        preds.multi_label = true;
        preds.scores = scores;
        preds.multi_labels = labels;
        return eval::mean_average_precision(preds);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "generate_corpus",
      [](const std::string& out_dir, int n_clips, double clip_len_s,
         std::uint64_t seed, int folds) {
        synth::SynthSpec spec;
        spec.n_clips = n_clips;
        spec.clip_len_s = clip_len_s;
        spec.seed = seed;
        spec.folds = folds;
        spec.classes = synth::default_classes();
        synth::generate_corpus(spec, out_dir);
        return out_dir + "/manifest.jsonl";
      },
      py::arg("out_dir"), py::arg("n_clips") = 300,
      py::arg("clip_len_s") = 10.0, py::arg("seed") = 0, py::arg("folds") = 0);

  m.def(
      "config_hash",
      [](const std::string& config_json) {
        return config::config_hash(config::parse_config(config_json));
      },
      py::arg("config_json"));
}

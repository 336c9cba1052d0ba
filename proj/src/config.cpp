// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/config.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace melssl::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (allowed.find(key) == allowed.end())
      throw ConfigError("config: unknown key '" + key + "' in section '" +
                        section + "'");
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_encoder_preset(RunConfigFile& cfg, const std::string& preset) {
  cfg.encoder_preset = preset;
  if (preset == "small") {
    const int max_tokens = cfg.pretrain.encoder.max_tokens;
    const int bins = cfg.pretrain.encoder.input_bins;
    cfg.pretrain.encoder = encoder::EncoderConfig::small_preset();
    cfg.pretrain.encoder.max_tokens = max_tokens;
    cfg.pretrain.encoder.input_bins = bins;
  } else if (preset == "base") {
    const int max_tokens = cfg.pretrain.encoder.max_tokens;
    const int bins = cfg.pretrain.encoder.input_bins;
    cfg.pretrain.encoder = encoder::EncoderConfig::base_preset();
    cfg.pretrain.encoder.max_tokens = max_tokens;
    cfg.pretrain.encoder.input_bins = bins;
  } else if (preset != "custom") {
    throw ConfigError("config: encoder.preset must be small|base|custom");
  }
}

void apply_train_preset(RunConfigFile& cfg, const std::string& preset) {
  cfg.train_preset = preset;
  if (preset == "small") {
    cfg.pretrain.peak_lr = 5e-4;
    cfg.pretrain.m0 = 0.99;
    cfg.pretrain.epochs = 300;
  } else if (preset == "base") {
    cfg.pretrain.peak_lr = 2e-4;
    cfg.pretrain.m0 = 0.9995;
    cfg.pretrain.epochs = 200;
  } else if (preset != "custom") {
    throw ConfigError("config: train.preset must be small|base|custom");
  }
}

json eval_to_json(const eval::EvalConfig& e) {
  json j;
  j["epochs"] = e.epochs;
  j["batch_size"] = e.batch_size;
  j["warmup_epochs"] = e.warmup_epochs;
  j["momentum"] = e.momentum;
  j["final_lr"] = e.final_lr;
  j["lr_grid"] = e.lr_grid;
  j["standardize_features"] = e.standardize_features;
  j["mixup_alpha"] = e.mixup_alpha;
  j["use_rrc"] = e.use_rrc;
  j["seed"] = e.seed;
  j["linear_pooling"] =
      e.pooling == encoder::LinearEvalPooling::per_block_concat
          ? "per_block"
          : "joint_average";
  return j;
}

void eval_from_json(const json& j, const std::string& section,
                    eval::EvalConfig& e) {
  check_keys(j, section,
             {"epochs", "batch_size", "warmup_epochs", "momentum", "final_lr",
              "lr_grid", "standardize_features", "mixup_alpha", "use_rrc",
              "seed", "linear_pooling"});
  get_if(j, "epochs", e.epochs);
  get_if(j, "batch_size", e.batch_size);
  get_if(j, "warmup_epochs", e.warmup_epochs);
  get_if(j, "momentum", e.momentum);
  get_if(j, "final_lr", e.final_lr);
  get_if(j, "lr_grid", e.lr_grid);
  get_if(j, "standardize_features", e.standardize_features);
  get_if(j, "mixup_alpha", e.mixup_alpha);
  get_if(j, "use_rrc", e.use_rrc);
  get_if(j, "seed", e.seed);
  if (j.contains("linear_pooling")) {
    const auto pooling = j.at("linear_pooling").get<std::string>();
    if (pooling == "per_block")
      e.pooling = encoder::LinearEvalPooling::per_block_concat;
    else if (pooling == "joint_average")
      e.pooling = encoder::LinearEvalPooling::joint_average;
    else
      throw ConfigError("config: linear_pooling must be per_block|joint_average");
  }
}

}  // namespace

RunConfigFile RunConfigFile::defaults() {
  RunConfigFile cfg;
  cfg.pretrain.batch_size = 1536;
  cfg.pretrain.epochs = 300;
  cfg.eval_linear.epochs = 100;
  cfg.eval_linear.batch_size = 1024;
  cfg.eval_linear.warmup_epochs = 0;
  cfg.eval_finetune.epochs = 50;
  cfg.eval_finetune.batch_size = 512;
  cfg.eval_finetune.warmup_epochs = 5;
  return cfg;
}

RunConfigFile parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, "(root)",
             {"mel", "views", "encoder", "heads", "schedules", "optimizer",
              "train", "eval", "data"});

  RunConfigFile cfg = RunConfigFile::defaults();

  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"sample_rate"});
    get_if(d, "sample_rate", cfg.sample_rate);
  }

  if (j.contains("mel")) {
    const auto& m = j["mel"];
    check_keys(m, "mel",
               {"window_s", "hop_s", "n_bins", "f_min", "f_max", "window"});
    get_if(m, "window_s", cfg.mel.window_s);
    get_if(m, "hop_s", cfg.mel.hop_s);
    get_if(m, "n_bins", cfg.mel.n_bins);
    get_if(m, "f_min", cfg.mel.f_min);
    get_if(m, "f_max", cfg.mel.f_max);
    if (m.contains("window")) {
      const auto window = m.at("window").get<std::string>();
      if (window == "hamming")
        cfg.mel.window_kind = dsp::WindowKind::Hamming;
      else if (window == "hann")
        cfg.mel.window_kind = dsp::WindowKind::Hann;
      else
        throw ConfigError("config: mel.window must be hamming|hann");
    }
  }
  cfg.pretrain.encoder.input_bins = cfg.mel.n_bins;

  if (j.contains("views")) {
    const auto& v = j["views"];
    check_keys(v, "views",
               {"segment_len_s", "use_two_segments", "clip_len_s",
                "mixup_alpha", "memory_size", "rrc_freq_scale",
                "rrc_time_scale", "mixup_before_rrc"});
    get_if(v, "segment_len_s", cfg.pretrain.pair.segment_len_s);
    get_if(v, "use_two_segments", cfg.pretrain.pair.use_two_segments);
    get_if(v, "clip_len_s", cfg.pretrain.pair.clip_len_s);
    get_if(v, "mixup_alpha", cfg.pretrain.augment.mixup_alpha);
    get_if(v, "memory_size", cfg.pretrain.augment.memory_size);
    get_if(v, "mixup_before_rrc", cfg.pretrain.augment.mixup_before_rrc);
    if (v.contains("rrc_freq_scale")) {
      const auto range = v.at("rrc_freq_scale").get<std::vector<double>>();
      if (range.size() != 2)
        throw ConfigError("config: rrc_freq_scale must be [lo, hi]");
      cfg.pretrain.augment.rrc_freq_scale_lo = range[0];
      cfg.pretrain.augment.rrc_freq_scale_hi = range[1];
    }
    if (v.contains("rrc_time_scale")) {
      const auto range = v.at("rrc_time_scale").get<std::vector<double>>();
      if (range.size() != 2)
        throw ConfigError("config: rrc_time_scale must be [lo, hi]");
      cfg.pretrain.augment.rrc_time_scale_lo = range[0];
      cfg.pretrain.augment.rrc_time_scale_hi = range[1];
    }
  }

  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    check_keys(e, "encoder",
               {"preset", "n_blocks", "n_heads", "dim", "inner_dim",
                "stack_frames", "max_tokens"});
    if (e.contains("preset"))
      apply_encoder_preset(cfg, e.at("preset").get<std::string>());
    get_if(e, "n_blocks", cfg.pretrain.encoder.n_blocks);
    get_if(e, "n_heads", cfg.pretrain.encoder.n_heads);
    get_if(e, "dim", cfg.pretrain.encoder.dim);
    get_if(e, "inner_dim", cfg.pretrain.encoder.inner_dim);
    get_if(e, "stack_frames", cfg.pretrain.encoder.stack_frames);
    get_if(e, "max_tokens", cfg.pretrain.encoder.max_tokens);
  }

  if (j.contains("heads")) {
    const auto& h = j["heads"];
    check_keys(h, "heads",
               {"hidden_dim", "out_dim", "teacher_eval_mode", "use_predictor",
                "ema_bn_buffers"});
    get_if(h, "hidden_dim", cfg.pretrain.heads.hidden_dim);
    get_if(h, "out_dim", cfg.pretrain.heads.out_dim);
    get_if(h, "teacher_eval_mode", cfg.pretrain.ssl_options.teacher_eval_mode);
    get_if(h, "use_predictor", cfg.pretrain.ssl_options.use_predictor);
    get_if(h, "ema_bn_buffers", cfg.pretrain.ema_bn_buffers);
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train",
               {"preset", "batch_size", "epochs", "seed", "diag_every_steps",
                "diag_probe_size", "checkpoint_every_steps"});
    if (t.contains("preset"))
      apply_train_preset(cfg, t.at("preset").get<std::string>());
    get_if(t, "batch_size", cfg.pretrain.batch_size);
    get_if(t, "epochs", cfg.pretrain.epochs);
    get_if(t, "seed", cfg.pretrain.seed);
    get_if(t, "diag_every_steps", cfg.pretrain.diag_every_steps);
    get_if(t, "diag_probe_size", cfg.pretrain.diag_probe_size);
    get_if(t, "checkpoint_every_steps", cfg.pretrain.checkpoint_every_steps);
  }

  if (j.contains("schedules")) {
    const auto& s = j["schedules"];
    check_keys(s, "schedules",
               {"peak_lr", "final_lr", "warmup_epochs", "wd_start", "wd_end",
                "m0", "m_end"});
    get_if(s, "peak_lr", cfg.pretrain.peak_lr);
    get_if(s, "final_lr", cfg.pretrain.final_lr);
    get_if(s, "warmup_epochs", cfg.pretrain.warmup_epochs);
    get_if(s, "wd_start", cfg.pretrain.wd_start);
    get_if(s, "wd_end", cfg.pretrain.wd_end);
    get_if(s, "m0", cfg.pretrain.m0);
    get_if(s, "m_end", cfg.pretrain.m_end);
  }

  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, "optimizer", {"beta1", "beta2", "eps", "clip_grad_norm"});
    get_if(o, "beta1", cfg.pretrain.adamw.beta1);
    get_if(o, "beta2", cfg.pretrain.adamw.beta2);
    get_if(o, "eps", cfg.pretrain.adamw.eps);
    get_if(o, "clip_grad_norm", cfg.pretrain.adamw.clip_grad_norm);
  }

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"linear", "finetune"});
    if (e.contains("linear")) eval_from_json(e["linear"], "eval.linear", cfg.eval_linear);
    if (e.contains("finetune"))
      eval_from_json(e["finetune"], "eval.finetune", cfg.eval_finetune);
  }

  // Auto-size the positional table when not pinned explicitly: enough for
  // the longer of the training segment and the evaluation chunk.
  if (!(j.contains("encoder") && j["encoder"].contains("max_tokens"))) {
    const double longest = std::max(cfg.pretrain.pair.segment_len_s, 6.0);
    const auto frames =
        static_cast<int>(std::lround(longest / cfg.mel.hop_s));
    cfg.pretrain.encoder.max_tokens =
        std::max(1, frames / cfg.pretrain.encoder.stack_frames);
  }

  cfg.mel.validate(cfg.sample_rate);
  cfg.pretrain.validate();
  cfg.eval_linear.validate();
  cfg.eval_finetune.validate();
  return cfg;
}

RunConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string dump_config(const RunConfigFile& cfg) {
  json j;
  j["data"] = {{"sample_rate", cfg.sample_rate}};
  j["mel"] = {
      {"window_s", cfg.mel.window_s},
      {"hop_s", cfg.mel.hop_s},
      {"n_bins", cfg.mel.n_bins},
      {"f_min", cfg.mel.f_min},
      {"f_max", cfg.mel.f_max},
      {"window",
       cfg.mel.window_kind == dsp::WindowKind::Hamming ? "hamming" : "hann"},
  };
  j["views"] = {
      {"segment_len_s", cfg.pretrain.pair.segment_len_s},
      {"use_two_segments", cfg.pretrain.pair.use_two_segments},
      {"clip_len_s", cfg.pretrain.pair.clip_len_s},
      {"mixup_alpha", cfg.pretrain.augment.mixup_alpha},
      {"memory_size", cfg.pretrain.augment.memory_size},
      {"rrc_freq_scale",
       {cfg.pretrain.augment.rrc_freq_scale_lo,
        cfg.pretrain.augment.rrc_freq_scale_hi}},
      {"rrc_time_scale",
       {cfg.pretrain.augment.rrc_time_scale_lo,
        cfg.pretrain.augment.rrc_time_scale_hi}},
      {"mixup_before_rrc", cfg.pretrain.augment.mixup_before_rrc},
  };
  j["encoder"] = {
      {"preset", cfg.encoder_preset},
      {"n_blocks", cfg.pretrain.encoder.n_blocks},
      {"n_heads", cfg.pretrain.encoder.n_heads},
      {"dim", cfg.pretrain.encoder.dim},
      {"inner_dim", cfg.pretrain.encoder.inner_dim},
      {"stack_frames", cfg.pretrain.encoder.stack_frames},
      {"max_tokens", cfg.pretrain.encoder.max_tokens},
  };
  j["heads"] = {
      {"hidden_dim", cfg.pretrain.heads.hidden_dim},
      {"out_dim", cfg.pretrain.heads.out_dim},
      {"teacher_eval_mode", cfg.pretrain.ssl_options.teacher_eval_mode},
      {"use_predictor", cfg.pretrain.ssl_options.use_predictor},
      {"ema_bn_buffers", cfg.pretrain.ema_bn_buffers},
  };
  j["schedules"] = {
      {"peak_lr", cfg.pretrain.peak_lr},   {"final_lr", cfg.pretrain.final_lr},
      {"warmup_epochs", cfg.pretrain.warmup_epochs},
      {"wd_start", cfg.pretrain.wd_start}, {"wd_end", cfg.pretrain.wd_end},
      {"m0", cfg.pretrain.m0},             {"m_end", cfg.pretrain.m_end},
  };
  j["optimizer"] = {
      {"beta1", cfg.pretrain.adamw.beta1},
      {"beta2", cfg.pretrain.adamw.beta2},
      {"eps", cfg.pretrain.adamw.eps},
      {"clip_grad_norm", cfg.pretrain.adamw.clip_grad_norm},
  };
  j["train"] = {
      {"preset", cfg.train_preset},
      {"batch_size", cfg.pretrain.batch_size},
      {"epochs", cfg.pretrain.epochs},
      {"seed", cfg.pretrain.seed},
      {"diag_every_steps", cfg.pretrain.diag_every_steps},
      {"diag_probe_size", cfg.pretrain.diag_probe_size},
      {"checkpoint_every_steps", cfg.pretrain.checkpoint_every_steps},
  };
  j["eval"] = {{"linear", eval_to_json(cfg.eval_linear)},
               {"finetune", eval_to_json(cfg.eval_finetune)}};
  return j.dump(2);
}

std::string config_hash(const RunConfigFile& cfg) {
  json j = json::parse(dump_config(cfg));
  j.erase("eval");  // downstream settings do not invalidate checkpoints
  return hash_hex(fnv1a64(j.dump()));
}

}  // namespace melssl::config

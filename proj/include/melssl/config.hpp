// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/eval.hpp"
#include "melssl/train.hpp"

#include <string>

namespace melssl::config {

/**
 * The run configuration: one JSON document with sections
 * mel / views / encoder / heads / schedules / optimizer / train / eval.
 * Unknown keys are rejected; presets fill defaults which explicit keys
 * then override. The pretrain-relevant sections are hashed and the hash
 * is embedded in checkpoints and result files.
 */
struct RunConfigFile {
  int sample_rate = 16000;
  dsp::MelParams mel;
  train::PretrainSettings pretrain;  // views + encoder + heads + schedules
  eval::EvalConfig eval_linear;
  eval::EvalConfig eval_finetune;
  std::string encoder_preset = "custom";  // "small" | "base" | "custom"
  std::string train_preset = "custom";

  static RunConfigFile defaults();
};

RunConfigFile parse_config(const std::string& json_text);
RunConfigFile load_config(const std::string& path);

/** Canonical JSON of the full config (round-trips through parse_config). */
std::string dump_config(const RunConfigFile& cfg);

/** Hash over the pretrain-relevant sections (eval settings excluded). */
std::string config_hash(const RunConfigFile& cfg);

}  // namespace melssl::config

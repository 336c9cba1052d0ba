// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/config.hpp"

#include "doctest.h"

using namespace melssl;

TEST_CASE("config defaults follow the published settings") {
  const auto cfg = config::parse_config("{}");
  CHECK(cfg.mel.window_s == 0.025);
  CHECK(cfg.mel.hop_s == 0.010);
  CHECK(cfg.mel.n_bins == 64);
  CHECK(cfg.mel.f_min == 60.0);
  CHECK(cfg.mel.f_max == 7800.0);
  CHECK(cfg.sample_rate == 16000);
  CHECK(cfg.pretrain.pair.segment_len_s == 6.0);
  CHECK(cfg.pretrain.pair.clip_len_s == 10.0);
  CHECK(cfg.pretrain.heads.hidden_dim == 4096);
  CHECK(cfg.pretrain.heads.out_dim == 256);
  CHECK(cfg.pretrain.wd_start == 0.04);
  CHECK(cfg.pretrain.wd_end == 0.4);
  CHECK(cfg.pretrain.final_lr == 1e-6);
  CHECK(cfg.pretrain.warmup_epochs == 10);
  CHECK(cfg.pretrain.batch_size == 1536);
  CHECK(cfg.eval_linear.epochs == 100);
  CHECK(cfg.eval_linear.batch_size == 1024);
  CHECK(cfg.eval_finetune.epochs == 50);
  CHECK(cfg.eval_finetune.batch_size == 512);
  CHECK(cfg.eval_finetune.warmup_epochs == 5);
  // 6 s segments at a 10 ms hop, stacked by 4 -> 150 tokens.
  CHECK(cfg.pretrain.encoder.max_tokens == 150);
}

TEST_CASE("presets pin the published architectures and runs") {
  SUBCASE("small") {
    const auto cfg = config::parse_config(
        R"({"encoder": {"preset": "small"}, "train": {"preset": "small"}})");
    CHECK(cfg.pretrain.encoder.n_blocks == 12);
    CHECK(cfg.pretrain.encoder.n_heads == 6);
    CHECK(cfg.pretrain.encoder.dim == 384);
    CHECK(cfg.pretrain.encoder.inner_dim == 1536);
    CHECK(cfg.pretrain.peak_lr == 5e-4);
    CHECK(cfg.pretrain.m0 == 0.99);
    CHECK(cfg.pretrain.epochs == 300);
  }
  SUBCASE("base") {
    const auto cfg = config::parse_config(
        R"({"encoder": {"preset": "base"}, "train": {"preset": "base"}})");
    CHECK(cfg.pretrain.encoder.n_heads == 12);
    CHECK(cfg.pretrain.encoder.dim == 768);
    CHECK(cfg.pretrain.encoder.inner_dim == 3072);
    CHECK(cfg.pretrain.peak_lr == 2e-4);
    CHECK(cfg.pretrain.m0 == 0.9995);
    CHECK(cfg.pretrain.epochs == 200);
  }
  SUBCASE("explicit keys override the preset") {
    const auto cfg = config::parse_config(
        R"({"encoder": {"preset": "small", "n_blocks": 4}})");
    CHECK(cfg.pretrain.encoder.n_blocks == 4);
    CHECK(cfg.pretrain.encoder.dim == 384);
  }
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(config::parse_config(R"({"mel": {"hop": 0.01}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"unknown_section": {}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"train": {"lr": 0.1}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config("not json"), ConfigError);
}

TEST_CASE("config round trips and hashes") {
  const auto cfg = config::parse_config(
      R"({"encoder": {"preset": "small"}, "schedules": {"peak_lr": 0.001}})");
  const auto text = config::dump_config(cfg);
  const auto reparsed = config::parse_config(text);
  CHECK(config::dump_config(reparsed) == text);
  CHECK(config::config_hash(reparsed) == config::config_hash(cfg));

  SUBCASE("eval settings do not change the hash") {
    auto other = cfg;
    other.eval_linear.epochs = 7;
    CHECK(config::config_hash(other) == config::config_hash(cfg));
  }

  SUBCASE("pretrain settings do change the hash") {
    auto other = cfg;
    other.pretrain.peak_lr = 0.002;
    CHECK(config::config_hash(other) != config::config_hash(cfg));
  }
}

// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// End-to-end checks of the command-line tool: spawns the real binary.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_dir;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >" +
                          (g_dir / "stdout.txt").string() + " 2>" +
                          (g_dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

const char* kTinyConfig = R"({
  "views": {"segment_len_s": 0.5, "clip_len_s": 2.0, "memory_size": 16},
  "encoder": {"n_blocks": 2, "n_heads": 2, "dim": 16, "inner_dim": 32,
              "stack_frames": 2, "max_tokens": 64},
  "heads": {"hidden_dim": 16, "out_dim": 8},
  "schedules": {"peak_lr": 0.001, "warmup_epochs": 1},
  "train": {"batch_size": 4, "epochs": 2, "seed": 7, "diag_every_steps": 2},
  "eval": {"linear": {"epochs": 20, "lr_grid": [0.01, 0.1], "seed": 1}}
})";

}  // namespace

TEST_CASE("cli end to end") {
  const auto corpus = (g_dir / "corpus").string();
  const auto config = (g_dir / "config.json").string();
  const auto stats = (g_dir / "stats.json").string();
  const auto run_dir = (g_dir / "run").string();
  {
    std::ofstream out(config);
    out << kTinyConfig;
  }

  SUBCASE("make-synthetic then the full pipeline") {
    REQUIRE(run("make-synthetic --out " + corpus +
                " --n-clips 12 --clip-len 2 --seed 3 --folds 2") == 0);
    REQUIRE(fs::exists(fs::path(corpus) / "manifest.jsonl"));

    const auto manifest = (fs::path(corpus) / "manifest.jsonl").string();

    // Stats are deterministic across runs.
    REQUIRE(run("compute-stats --config " + config + " --manifest " + manifest +
                " --out " + stats) == 0);
    const auto first = slurp(stats);
    REQUIRE(run("compute-stats --config " + config + " --manifest " + manifest +
                " --out " + stats) == 0);
    CHECK(first == slurp(stats));

    REQUIRE(run("pretrain --config " + config + " --manifest " + manifest +
                " --stats " + stats + " --out-dir " + run_dir) == 0);
    CHECK(fs::exists(fs::path(run_dir) / "checkpoint.ckpt"));
    CHECK(fs::exists(fs::path(run_dir) / "metrics.jsonl"));

    // Metrics lines carry the schedule values.
    {
      std::ifstream metrics(fs::path(run_dir) / "metrics.jsonl");
      std::string line;
      std::getline(metrics, line);  // header
      const auto header = json::parse(line);
      CHECK(header.contains("config_hash"));
      REQUIRE(std::getline(metrics, line));
      const auto record = json::parse(line);
      CHECK(record.contains("loss"));
      CHECK(record.contains("lr"));
      CHECK(record.contains("wd"));
      CHECK(record.contains("m"));
    }

    const auto ckpt = (fs::path(run_dir) / "checkpoint.ckpt").string();
    const auto results = (g_dir / "results.json").string();
    REQUIRE(run("eval --config " + config + " --checkpoint " + ckpt +
                " --manifest " + manifest + " --stats " + stats +
                " --protocol linear --out " + results) == 0);
    const auto parsed = json::parse(slurp(results));
    CHECK(parsed["metric_name"] == "accuracy");
    CHECK(parsed["value"].get<double>() >= 0.0);
    CHECK(parsed["value"].get<double>() <= 1.0);
    CHECK(parsed.contains("config_hash"));

    // Probe training must leave the checkpoint bytes untouched.
    const auto ckpt_before = slurp(ckpt);
    REQUIRE(run("eval --config " + config + " --checkpoint " + ckpt +
                " --manifest " + manifest + " --stats " + stats +
                " --protocol linear --out " + results) == 0);
    CHECK(slurp(ckpt) == ckpt_before);

    // Two folds emit two per-fold entries plus a mean.
    REQUIRE(run("eval --config " + config + " --checkpoint " + ckpt +
                " --manifest " + manifest + " --stats " + stats +
                " --protocol linear --folds 2 --out " + results) == 0);
    const auto folded = json::parse(slurp(results));
    REQUIRE(folded.contains("per_fold"));
    CHECK(folded["per_fold"].size() == 2);

    // Random-init control runs without a checkpoint.
    REQUIRE(run("eval --config " + config + " --manifest " + manifest +
                " --stats " + stats +
                " --protocol linear --random-init --out " + results) == 0);
  }

  SUBCASE("exit codes") {
    CHECK(run("compute-stats --config " + config +
              " --manifest /nonexistent/m.jsonl --out " + stats) == 2);
    {
      std::ofstream bad(g_dir / "bad_config.json");
      bad << R"({"train": {"unknown_knob": 1}})";
    }
    REQUIRE(run("make-synthetic --out " + corpus + " --n-clips 6 --clip-len 1 "
                "--seed 3") == 0);
    const auto manifest = (fs::path(corpus) / "manifest.jsonl").string();
    CHECK(run("compute-stats --config " + (g_dir / "bad_config.json").string() +
              " --manifest " + manifest + " --out " + stats) == 2);
    CHECK(run("nonsense-subcommand") == 2);
  }
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-melssl-cli>\n", argv[0]);
    return 1;
  }
  g_cli = argv[1];
  g_dir = fs::temp_directory_path() / "melssl_cli_test";
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);

  doctest::Context context;
  context.applyCommandLine(1, argv);
  const int rc = context.run();
  fs::remove_all(g_dir);
  return rc;
}

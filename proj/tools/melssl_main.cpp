// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/config.hpp"
#include "melssl/eval.hpp"
#include "melssl/manifest.hpp"
#include "melssl/synth.hpp"
#include "melssl/train.hpp"
#include "melssl/wav_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace melssl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw ConfigError(what + " not found: " + path);
}

config::RunConfigFile load_config_with_overrides(
    const std::string& path, const std::vector<std::string>& overrides) {
  require_file(path, "config file");
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  for (const auto& rule : overrides) {
    const auto eq = rule.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like section.key=value: " + rule);
    const std::string key_path = rule.substr(0, eq);
    const std::string value = rule.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare strings are allowed
    }
    json* node = &j;
    std::stringstream keys(key_path);
    std::string key, prev;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) parts.push_back(key);
    if (parts.empty()) throw ConfigError("empty override key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i)
      node = &(*node)[parts[i]];
    (*node)[parts.back()] = parsed;
  }
  return config::parse_config(j.dump());
}

struct LoadedDataset {
  data::Manifest manifest;
  std::vector<Matrix> mels;
  std::vector<int> labels;
  std::vector<int> folds;
  std::vector<std::string> splits;
  bool multi_label = false;
  int n_classes = 0;
};

std::vector<std::string> manifest_paths(const data::Manifest& manifest) {
  std::vector<std::string> paths;
  paths.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) paths.push_back(e.path);
  return paths;
}

LoadedDataset load_dataset(const std::string& manifest_path,
                           const config::RunConfigFile& cfg,
                           const dsp::GlobalStats& stats) {
  LoadedDataset ds;
  ds.manifest = data::read_manifest(manifest_path);
  ds.mels = train::load_normalized_mels(manifest_paths(ds.manifest), cfg.mel,
                                        stats, cfg.sample_rate);
  int max_label = -1;
  for (const auto& e : ds.manifest.entries) {
    if (!e.labels.empty()) ds.multi_label = true;
    const int label = e.label.value_or(e.labels.empty() ? -1 : e.labels.front());
    ds.labels.push_back(label);
    for (int l : e.labels) max_label = std::max(max_label, l);
    if (e.label) max_label = std::max(max_label, *e.label);
    ds.folds.push_back(e.fold.value_or(0));
    ds.splits.push_back(e.split);
  }
  ds.n_classes = max_label + 1;
  return ds;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Minimal line plot, written as a standalone SVG file.
void write_line_plot_svg(const std::string& path,
                         const std::vector<double>& xs,
                         const std::vector<std::vector<double>>& series,
                         const std::vector<std::string>& names,
                         const std::string& x_label,
                         const std::string& y_label) {
  const int width = 640, height = 440, margin = 60;
  double x_lo = xs.front(), x_hi = xs.front();
  for (double x : xs) {
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
  }
  double y_lo = 1e300, y_hi = -1e300;
  for (const auto& s : series)
    for (double y : s) {
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;

  auto px = [&](double x) {
    return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin);
  };
  auto py = [&](double y) {
    return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin);
  };

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<line x1='" << margin << "' y1='" << height - margin << "' x2='"
      << width - margin << "' y2='" << height - margin
      << "' stroke='black'/>\n"
      << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin
      << "' y2='" << height - margin << "' stroke='black'/>\n";
  svg << "<text x='" << width / 2 << "' y='" << height - 15
      << "' text-anchor='middle' font-size='14'>" << x_label << "</text>\n";
  svg << "<text x='18' y='" << height / 2
      << "' text-anchor='middle' font-size='14' transform='rotate(-90 18 "
      << height / 2 << ")'>" << y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<polyline fill='none' stroke='" << colors[s % 4]
        << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < xs.size(); ++i)
      svg << px(xs[i]) << "," << py(series[s][i]) << " ";
    svg << "'/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
      svg << "<circle cx='" << px(xs[i]) << "' cy='" << py(series[s][i])
          << "' r='3' fill='" << colors[s % 4] << "'/>\n";
    svg << "<text x='" << width - margin + 5 << "' y='"
        << margin + 18 * static_cast<int>(s) << "' font-size='12' fill='"
        << colors[s % 4] << "'>" << names[s] << "</text>\n";
  }
  // Axis extremes.
  svg << "<text x='" << margin << "' y='" << height - margin + 18
      << "' font-size='11'>" << x_lo << "</text>\n"
      << "<text x='" << width - margin << "' y='" << height - margin + 18
      << "' text-anchor='end' font-size='11'>" << x_hi << "</text>\n"
      << "<text x='" << margin - 6 << "' y='" << height - margin
      << "' text-anchor='end' font-size='11'>" << y_lo << "</text>\n"
      << "<text x='" << margin - 6 << "' y='" << margin
      << "' text-anchor='end' font-size='11'>" << y_hi << "</text>\n";
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << svg.str();
}

// ---------------------------------------------------------------------------
// compute-stats

int cmd_compute_stats(const std::string& config_path,
                      const std::string& manifest_path,
                      const std::string& out_path,
                      const std::vector<std::string>& overrides) {
  const auto cfg = load_config_with_overrides(config_path, overrides);
  require_file(manifest_path, "manifest");
  const auto manifest = data::read_manifest(manifest_path);

  dsp::StatsAccumulator acc(cfg.mel.hash());
  for (const auto& entry : manifest.entries) {
    const auto clip = dsp::resample(dsp::read_wav(entry.path), cfg.sample_rate);
    acc.add(dsp::mel_spectrogram(clip, cfg.mel));
  }
  const auto stats = acc.finish();
  dsp::save_stats(stats, out_path);
  std::cout << "stats: min " << stats.min_val << " max " << stats.max_val
            << " frames " << stats.n_frames_seen << " -> " << out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const std::string& config_path,
                 const std::string& manifest_path,
                 const std::string& stats_path, const std::string& out_dir,
                 const std::string& resume_path,
                 const std::vector<std::string>& overrides) {
  const auto cfg = load_config_with_overrides(config_path, overrides);
  require_file(manifest_path, "manifest");
  require_file(stats_path, "stats file");
  const auto stats = dsp::load_stats(stats_path);
  if (stats.mel_params_hash != cfg.mel.hash())
    throw DataError("stats file was computed with different mel parameters");

  const auto manifest = data::read_manifest(manifest_path);
  auto mels = train::load_normalized_mels(manifest_paths(manifest), cfg.mel,
                                          stats, cfg.sample_rate);

  fs::create_directories(out_dir);
  const std::string hash = config::config_hash(cfg);
  {
    std::ofstream echo(fs::path(out_dir) / "config.json");
    echo << config::dump_config(cfg);
  }

  train::Trainer trainer(cfg.pretrain, std::move(mels), hash);
  if (!resume_path.empty()) {
    require_file(resume_path, "resume checkpoint");
    trainer.load(resume_path);
    std::cout << "resumed from step " << trainer.step() << "\n";
  }

  const auto metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw DataError("cannot write " + metrics_path);
  metrics << json{{"type", "header"},
                  {"config_hash", hash},
                  {"total_steps", trainer.total_steps()},
                  {"steps_per_epoch", trainer.steps_per_epoch()}}
                 .dump()
          << "\n";

  const auto ckpt_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
  try {
    trainer.run([&](const train::StepMetrics& m) {
      json line{{"step", m.step}, {"loss", m.loss},
                {"lr", m.lr},     {"wd", m.wd},
                {"m", m.m}};
      if (m.diagnostics) {
        line["cosine_mean"] = m.diagnostics->mean_pairwise_cosine;
        line["embed_std"] = m.diagnostics->embed_std;
      }
      metrics << line.dump() << "\n";
      const auto every = trainer.settings().checkpoint_every_steps;
      if (every > 0 && (m.step + 1) % every == 0) trainer.save(ckpt_path);
    });
  } catch (const NumericalError& e) {
    // Leave a diagnostic trail before aborting.
    metrics << json{{"type", "abort"}, {"error", e.what()}}.dump() << "\n";
    trainer.save((fs::path(out_dir) / "abort.ckpt").string());
    throw;
  }

  trainer.save(ckpt_path);
  std::cout << "pretrained " << trainer.step() << " steps -> " << ckpt_path
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct SplitIndices {
  std::vector<int> train, valid, test;
};

SplitIndices split_dataset(const LoadedDataset& ds) {
  SplitIndices split;
  for (std::size_t i = 0; i < ds.splits.size(); ++i) {
    const auto idx = static_cast<int>(i);
    if (ds.splits[i] == "train")
      split.train.push_back(idx);
    else if (ds.splits[i] == "valid")
      split.valid.push_back(idx);
    else if (ds.splits[i] == "test")
      split.test.push_back(idx);
    else
      split.train.push_back(idx);
  }
  return split;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& manifest_path, const std::string& protocol,
             const std::string& out_path, const std::string& task_name,
             int folds, bool random_init, std::uint64_t random_init_seed,
             const std::string& stats_path,
             const std::vector<std::string>& overrides) {
  const auto cfg = load_config_with_overrides(config_path, overrides);
  require_file(manifest_path, "manifest");
  require_file(stats_path, "stats file");
  const auto stats = dsp::load_stats(stats_path);
  const std::string hash = config::config_hash(cfg);

  const auto ds = load_dataset(manifest_path, cfg, stats);
  if (ds.n_classes < 2) throw DataError("eval: manifest has no usable labels");

  eval::TaskSpec task;
  task.name = task_name;
  task.n_classes = ds.n_classes;
  task.multi_label = ds.multi_label;
  task.folds = folds;

  // The teacher encoder is the downstream feature extractor.
  encoder::EncoderState enc = [&] {
    if (random_init) {
      Rng rng(random_init_seed);
      return encoder::init_encoder(cfg.pretrain.encoder, rng);
    }
    require_file(checkpoint_path, "checkpoint");
    const auto ckpt = train::load_checkpoint(checkpoint_path, hash);
    Rng rng(cfg.pretrain.seed);
    auto state = encoder::init_encoder(cfg.pretrain.encoder, rng);
    state.visit([&](const std::string& name, nn::Param& p) {
      const auto it = ckpt.tensors.find("teacher.encoder." + name);
      if (it == ckpt.tensors.end())
        throw DataError("checkpoint is missing teacher.encoder." + name);
      p.value = it->second;
    });
    return state;
  }();

  json result{{"task", task.name},
              {"protocol", protocol},
              {"config_hash", hash},
              {"random_init", random_init}};

  if (protocol == "linear") {
    const auto cfg_lin = cfg.eval_linear;
    const Matrix features =
        eval::embed_dataset(ds.mels, enc, encoder::EmbeddingMode::linear_eval,
                            task, cfg.mel.hop_s, cfg_lin.pooling);
    if (folds > 1) {
      const auto kfold =
          eval::kfold_evaluate(features, ds.labels, ds.folds, cfg_lin, task);
      result["metric_name"] = task.multi_label ? "mAP" : "accuracy";
      result["value"] = kfold.mean;
      result["per_fold"] = kfold.per_fold;
    } else {
      const auto split = split_dataset(ds);
      if (split.test.empty())
        throw DataError("eval: manifest has no test split");
      const auto probe = eval::train_linear_probe(
          gather_rows(features, split.train), gather(ds.labels, split.train),
          gather_rows(features, split.valid), gather(ds.labels, split.valid),
          cfg_lin, task);
      result["lr_chosen"] = probe.lr_chosen;
      result["metric_name"] = task.multi_label ? "mAP" : "accuracy";
      result["value"] = eval::evaluate_probe(
          probe.classifier, gather_rows(features, split.test),
          gather(ds.labels, split.test), task);
    }
  } else if (protocol == "finetune") {
    const auto split = split_dataset(ds);
    if (split.test.empty()) throw DataError("eval: manifest has no test split");
    auto gather_mels = [&](const std::vector<int>& idx) {
      std::vector<Matrix> out;
      out.reserve(idx.size());
      for (int i : idx) out.push_back(ds.mels[static_cast<std::size_t>(i)]);
      return out;
    };
    auto tuned_enc = enc;
    const auto tuned = eval::finetune(
        tuned_enc, gather_mels(split.train), gather(ds.labels, split.train),
        gather_mels(split.valid), gather(ds.labels, split.valid),
        cfg.eval_finetune, task, cfg.mel.hop_s);
    const Matrix scores = eval::finetune_predict(
        tuned_enc, tuned.head, gather_mels(split.test), task, cfg.mel.hop_s);
    eval::PredictionSet preds;
    preds.scores = scores;
    preds.multi_label = task.multi_label;
    if (task.multi_label) {
      for (int i : split.test)
        preds.multi_labels.push_back(
            ds.manifest.entries[static_cast<std::size_t>(i)].labels);
      result["value"] = eval::mean_average_precision(preds);
      result["metric_name"] = "mAP";
    } else {
      preds.labels = gather(ds.labels, split.test);
      result["value"] = eval::accuracy(preds);
      result["metric_name"] = "accuracy";
    }
    result["lr_chosen"] = tuned.lr_chosen;
  } else {
    throw ConfigError("eval: protocol must be linear or finetune");
  }

  write_json(result, out_path);
  std::cout << result["metric_name"].get<std::string>() << " "
            << result["value"].get<double>() << " -> " << out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep-segment-length

int cmd_sweep(const std::string& config_path, const std::string& manifest_path,
              const std::string& stats_path, const std::string& out_dir,
              const std::vector<double>& lengths,
              const std::vector<std::string>& overrides) {
  if (lengths.empty()) throw ConfigError("sweep: no segment lengths given");
  require_file(manifest_path, "manifest");
  require_file(stats_path, "stats file");
  fs::create_directories(out_dir);

  std::vector<double> raw_scores;
  for (const double seg_len : lengths) {
    auto overrides_run = overrides;
    overrides_run.push_back("views.segment_len_s=" + std::to_string(seg_len));
    const auto cfg = load_config_with_overrides(config_path, overrides_run);
    const auto stats = dsp::load_stats(stats_path);
    const auto ds = load_dataset(manifest_path, cfg, stats);

    train::Trainer trainer(cfg.pretrain, ds.mels,
                           config::config_hash(cfg));
    trainer.run(nullptr);

    eval::TaskSpec task;
    task.n_classes = ds.n_classes;
    task.multi_label = ds.multi_label;
    task.chunk_s = seg_len;  // short-segment runs chunk at their own length
    task.max_crop_s = std::max(12.0, 2 * seg_len);

    const Matrix features = eval::embed_dataset(
        ds.mels, trainer.teacher().encoder, encoder::EmbeddingMode::linear_eval,
        task, cfg.mel.hop_s, cfg.eval_linear.pooling);
    const auto split = split_dataset(ds);
    if (split.test.empty()) throw DataError("sweep: manifest has no test split");
    const auto probe = eval::train_linear_probe(
        gather_rows(features, split.train), gather(ds.labels, split.train),
        gather_rows(features, split.valid), gather(ds.labels, split.valid),
        cfg.eval_linear, task);
    const double score = eval::evaluate_probe(
        probe.classifier, gather_rows(features, split.test),
        gather(ds.labels, split.test), task);
    raw_scores.push_back(score);
    std::cout << "segment " << seg_len << " s -> score " << score << "\n";
  }

  // Min-max normalization over the sweep; undefined for a single length.
  std::vector<double> normalized(raw_scores.size(), 0.0);
  double lo = raw_scores[0], hi = raw_scores[0];
  for (double s : raw_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const bool degenerate = raw_scores.size() < 2 || hi == lo;
  if (degenerate)
    std::cerr << "warning: normalization undefined for this sweep; "
                 "raw scores only\n";
  else
    for (std::size_t i = 0; i < raw_scores.size(); ++i)
      normalized[i] = (raw_scores[i] - lo) / (hi - lo);

  const auto csv_path = (fs::path(out_dir) / "sweep.csv").string();
  std::ofstream csv(csv_path);
  csv << "segment_len_s,score" << (degenerate ? "" : ",normalized") << "\n";
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    csv << lengths[i] << "," << raw_scores[i];
    if (!degenerate) csv << "," << normalized[i];
    csv << "\n";
  }

  if (!degenerate) {
    write_line_plot_svg((fs::path(out_dir) / "sweep.svg").string(), lengths,
                        {normalized}, {"normalized score"},
                        "segment length (s)", "normalized score");
  } else {
    write_line_plot_svg((fs::path(out_dir) / "sweep.svg").string(), lengths,
                        {raw_scores}, {"score"}, "segment length (s)",
                        "score");
  }
  std::cout << "sweep results -> " << csv_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// make-synthetic

int cmd_make_synthetic(const std::string& out_dir, int n_clips,
                       double clip_len_s, const std::string& class_list,
                       std::uint64_t seed, int folds) {
  synth::SynthSpec spec;
  spec.n_clips = n_clips;
  spec.clip_len_s = clip_len_s;
  spec.seed = seed;
  spec.folds = folds;
  if (class_list.empty() || class_list == "default") {
    spec.classes = synth::default_classes();
  } else {
    std::stringstream ss(class_list);
    std::string kind;
    while (std::getline(ss, kind, ',')) {
      synth::ClassSpec cls;
      cls.kind = synth::parse_generator_kind(kind);
      spec.classes.push_back(cls);
    }
  }

  const json header{{"type", "header"},
                    {"tool", "make-synthetic"},
                    {"args",
                     {{"n_clips", n_clips},
                      {"clip_len_s", clip_len_s},
                      {"classes", class_list.empty() ? "default" : class_list},
                      {"seed", seed},
                      {"folds", folds}}}};
  const auto manifest = synth::generate_corpus(spec, out_dir, header.dump());
  std::cout << "wrote " << manifest.entries.size() << " clips to " << out_dir
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mel-domain self-supervised audio pre-training toolkit"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, stats_path, out_path, out_dir;
  std::string checkpoint_path, resume_path, protocol = "linear";
  std::string task_name = "task", class_list = "default", lengths_arg = "6";
  std::vector<std::string> overrides;
  int n_clips = 300, folds = 0, eval_folds = 1, threads = 0;
  double clip_len_s = 10.0;
  std::uint64_t seed = 0, control_seed = 9999;
  bool random_init = false;

  app.add_option("--threads", threads, "worker threads (0 = library default)");

  auto* stats_cmd = app.add_subcommand("compute-stats",
                                       "global min/max over a corpus");
  stats_cmd->add_option("--config", config_path)->required();
  stats_cmd->add_option("--manifest", manifest_path)->required();
  stats_cmd->add_option("--out", out_path)->required();
  stats_cmd->add_option("-O,--override", overrides);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "teacher-student pre-training");
  pretrain_cmd->add_option("--config", config_path)->required();
  pretrain_cmd->add_option("--manifest", manifest_path)->required();
  pretrain_cmd->add_option("--stats", stats_path)->required();
  pretrain_cmd->add_option("--out-dir", out_dir)->required();
  pretrain_cmd->add_option("--resume", resume_path);
  pretrain_cmd->add_option("-O,--override", overrides);

  auto* eval_cmd = app.add_subcommand("eval", "linear probe or finetuning");
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path);
  eval_cmd->add_option("--manifest", manifest_path)->required();
  eval_cmd->add_option("--stats", stats_path)->required();
  eval_cmd->add_option("--protocol", protocol)
      ->check(CLI::IsMember({"linear", "finetune"}));
  eval_cmd->add_option("--out", out_path)->required();
  eval_cmd->add_option("--task-name", task_name);
  eval_cmd->add_option("--folds", eval_folds);
  eval_cmd->add_flag("--random-init", random_init,
                     "use a randomly initialized encoder (control)");
  eval_cmd->add_option("--random-init-seed", control_seed);
  eval_cmd->add_option("-O,--override", overrides);

  auto* sweep_cmd = app.add_subcommand("sweep-segment-length",
                                       "pretrain+probe per segment length");
  sweep_cmd->add_option("--config", config_path)->required();
  sweep_cmd->add_option("--manifest", manifest_path)->required();
  sweep_cmd->add_option("--stats", stats_path)->required();
  sweep_cmd->add_option("--out-dir", out_dir)->required();
  sweep_cmd->add_option("--lengths", lengths_arg,
                        "comma-separated segment lengths in seconds");
  sweep_cmd->add_option("-O,--override", overrides);

  auto* synth_cmd = app.add_subcommand("make-synthetic",
                                       "deterministic synthetic corpus");
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--n-clips", n_clips);
  synth_cmd->add_option("--clip-len", clip_len_s);
  synth_cmd->add_option("--classes", class_list,
                        "comma list of pure_tone|chirp|noise_band|am_tone");
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--folds", folds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  if (threads > 0) {
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
  }

  try {
    if (stats_cmd->parsed())
      return cmd_compute_stats(config_path, manifest_path, out_path, overrides);
    if (pretrain_cmd->parsed())
      return cmd_pretrain(config_path, manifest_path, stats_path, out_dir,
                          resume_path, overrides);
    if (eval_cmd->parsed())
      return cmd_eval(config_path, checkpoint_path, manifest_path, protocol,
                      out_path, task_name, eval_folds, random_init,
                      control_seed, stats_path, overrides);
    if (sweep_cmd->parsed()) {
      std::vector<double> lengths;
      std::stringstream ss(lengths_arg);
      std::string tok;
      while (std::getline(ss, tok, ',')) lengths.push_back(std::stod(tok));
      return cmd_sweep(config_path, manifest_path, stats_path, out_dir,
                       lengths, overrides);
    }
    if (synth_cmd->parsed())
      return cmd_make_synthetic(out_dir, n_clips, clip_len_s, class_list, seed,
                                folds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

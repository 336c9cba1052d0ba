// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/train.hpp"

#include "melssl/wav_io.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>

#include <algorithm>
#include <cmath>

namespace melssl::train {

void PretrainSettings::validate() const {
  pair.validate();
  augment.validate();
  encoder.validate();
  heads.validate();
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be >= 0");
  if (!(peak_lr > 0)) throw ConfigError("train: peak_lr must be > 0");
  if (m0 < 0.0 || m0 > 1.0) throw ConfigError("train: m0 must be in [0, 1]");
  if (m_end < 0.0 || m_end > 1.0)
    throw ConfigError("train: m_end must be in [0, 1]");
  if (diag_probe_size < 2)
    throw ConfigError("train: diag_probe_size must be >= 2");
}

Trainer::Trainer(PretrainSettings settings, std::vector<Matrix> normalized_mels,
                 std::string config_hash)
    : settings_(std::move(settings)),
      mels_(std::move(normalized_mels)),
      config_hash_(std::move(config_hash)),
      bank_(settings_.augment.memory_size) {
  settings_.validate();
  if (mels_.size() < 2) throw DataError("trainer: need at least 2 clips");

  const auto n = static_cast<std::int64_t>(mels_.size());
  const std::int64_t batch = settings_.batch_size;
  const std::int64_t full = n / batch;
  const std::int64_t rem = n % batch;
  steps_per_epoch_ = full + (rem >= 2 ? 1 : 0);
  if (steps_per_epoch_ < 1)
    throw DataError("trainer: dataset smaller than one batch");
  total_steps_ = steps_per_epoch_ * settings_.epochs;

  Rng init_rng(settings_.seed);
  student_ = ssl::init_student(settings_.encoder, settings_.heads, init_rng);
  teacher_ = ssl::init_teacher(student_);
  adamw_ = AdamW(settings_.adamw);
  adamw_.register_params(student_params());
  schedules_ = make_schedules(
      settings_.peak_lr, settings_.final_lr, settings_.wd_start,
      settings_.wd_end, settings_.m0, settings_.m_end,
      std::min<std::int64_t>(settings_.warmup_epochs * steps_per_epoch_,
                             total_steps_),
      total_steps_);
}

std::vector<nn::Param*> Trainer::student_params() {
  std::vector<nn::Param*> params;
  student_.visit([&](const std::string&, nn::Param& p) { params.push_back(&p); });
  return params;
}

Trainer::BatchPlan Trainer::plan_for_step(std::int64_t step) const {
  BatchPlan plan;
  plan.epoch = step / steps_per_epoch_;
  const std::int64_t pos = step % steps_per_epoch_;

  std::vector<int> order(mels_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuffle_rng = Rng(settings_.seed)
                        .derive("shuffle", static_cast<std::uint64_t>(plan.epoch));
  shuffle_rng.shuffle(order);

  const auto start = static_cast<std::size_t>(pos * settings_.batch_size);
  const auto end = std::min(order.size(),
                            start + static_cast<std::size_t>(settings_.batch_size));
  plan.clip_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
  return plan;
}

std::vector<views::ViewPair> Trainer::make_views(const BatchPlan& plan) {
  std::vector<views::ViewPair> pairs;
  pairs.reserve(plan.clip_indices.size());
  for (int idx : plan.clip_indices) {
    Rng sample_rng = Rng(settings_.seed)
                         .derive("sample", static_cast<std::uint64_t>(plan.epoch),
                                 static_cast<std::uint64_t>(idx));
    dsp::MelSpec spec;
    spec.values = mels_[static_cast<std::size_t>(idx)];
    pairs.push_back(views::create_views(spec, settings_.pair, settings_.augment,
                                        bank_, sample_rng));
  }
  return pairs;
}

StepMetrics Trainer::train_step() {
  if (done()) throw ConfigError("train_step: run already finished");
  const BatchPlan plan = plan_for_step(step_);
  if (plan.clip_indices.size() < 2)
    throw ConfigError("train_step: batch must hold >= 2 samples");

  const auto pairs = make_views(plan);
  auto fwd = ssl::symmetric_loss_forward(pairs, student_, teacher_,
                                         /*train_mode=*/true,
                                         /*keep_caches=*/true,
                                         settings_.ssl_options);
  if (!std::isfinite(fwd.loss))
    throw NumericalError("train_step: non-finite loss at step " +
                         std::to_string(step_));

  student_.zero_grads();
  ssl::symmetric_loss_backward(student_, student_, fwd, settings_.ssl_options);

  StepMetrics metrics;
  metrics.step = step_;
  metrics.loss = fwd.loss;
  metrics.lr = cosine_value(schedules_.lr, step_);
  metrics.wd = cosine_value(schedules_.weight_decay, step_);
  metrics.m = cosine_value(schedules_.ema_decay, step_);

  adamw_.step(metrics.lr, metrics.wd);
  ssl::update_running_stats(student_.projector, fwd.proj_cache);
  if (settings_.ssl_options.use_predictor)
    ssl::update_running_stats(student_.predictor, fwd.pred_cache);

  if (settings_.ema_bn_buffers) {
    ssl::ema_update(teacher_, student_, metrics.m);
  } else {
    // EMA the weights, copy the buffers.
    const Matrix saved_mean = student_.projector.bn_running_mean;
    const Matrix saved_var = student_.projector.bn_running_var;
    ssl::ema_update(teacher_, student_, metrics.m);
    teacher_.projector.bn_running_mean = saved_mean;
    teacher_.projector.bn_running_var = saved_var;
  }

  ++step_;
  last_loss_ = fwd.loss;

  if (settings_.diag_every_steps > 0 &&
      (step_ % settings_.diag_every_steps == 0 || step_ == total_steps_))
    metrics.diagnostics = collapse_diagnostics(fwd.loss);
  return metrics;
}

void Trainer::run(const MetricsCallback& on_step, std::int64_t max_steps) {
  std::int64_t budget = max_steps >= 0 ? max_steps : total_steps_;
  while (!done() && budget-- > 0) {
    const StepMetrics metrics = train_step();
    if (on_step) on_step(metrics);
  }
}

std::vector<Matrix> Trainer::probe_segments(int count) const {
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(count), mels_.size());
  const auto hop = 0.01;  // normalized mels keep the config hop implicitly
  (void)hop;
  std::vector<Matrix> probes;
  probes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& mel = mels_[i];
    const auto seg_frames = std::min<Eigen::Index>(
        mel.rows(),
        static_cast<Eigen::Index>(settings_.encoder.max_tokens) *
            settings_.encoder.stack_frames);
    const Eigen::Index start = (mel.rows() - seg_frames) / 2;
    probes.push_back(mel.middleRows(start, seg_frames));
  }
  return probes;
}

CollapseReport Trainer::collapse_diagnostics(double current_loss) {
  const auto probes = probe_segments(settings_.diag_probe_size);
  const auto n = static_cast<Eigen::Index>(probes.size());
  if (n < 2) throw ConfigError("collapse_diagnostics: need >= 2 probe clips");

  Matrix cls(n, settings_.encoder.dim);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    dsp::MelSpec spec;
    spec.values = probes[static_cast<std::size_t>(i)];
    const auto seq = encoder::encode(spec, teacher_.encoder);
    cls.row(i) = seq.tokens.row(0);
  }
  const Matrix z = ssl::head_forward(cls, teacher_.projector,
                                     /*train_mode=*/false);

  Matrix unit = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0) unit.row(i) /= norm;
  }

  // Mean pairwise cosine via the Gram identity: sum_{i != j} u_i . u_j.
  const double total = unit.colwise().sum().squaredNorm();
  const double nf = static_cast<double>(n);

  CollapseReport report;
  report.mean_pairwise_cosine = (total - nf) / (nf * (nf - 1.0));
  const Matrix centered = unit.rowwise() - unit.colwise().mean();
  report.embed_std =
      (centered.array().square().colwise().sum() / (nf - 1.0)).sqrt().mean();
  report.loss = current_loss;
  return report;
}

void Trainer::rebuild_bank() {
  bank_ = views::MemoryBank(settings_.augment.memory_size);
  // Two pushes per clip, so replaying this many clips refills the FIFO.
  const auto needed = static_cast<std::int64_t>(
      (settings_.augment.memory_size + 1) / 2);
  // Every step consumes at least 2 clips.
  const std::int64_t first_step =
      std::max<std::int64_t>(0, step_ - (needed + 1) / 2 - 1);

  std::vector<std::pair<std::int64_t, int>> history;  // (epoch, clip)
  for (std::int64_t s = first_step; s < step_; ++s) {
    const BatchPlan plan = plan_for_step(s);
    for (int idx : plan.clip_indices) history.emplace_back(plan.epoch, idx);
  }
  const auto begin =
      history.size() > static_cast<std::size_t>(needed)
          ? history.end() - static_cast<std::ptrdiff_t>(needed)
          : history.begin();

  for (auto it = begin; it != history.end(); ++it) {
    const auto& [epoch, clip] = *it;
    Rng sample_rng = Rng(settings_.seed)
                         .derive("sample", static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(clip));
    dsp::MelSpec spec;
    spec.values = mels_[static_cast<std::size_t>(clip)];
    Rng crop_rng = sample_rng.derive("crop");
    const auto segs = views::sample_segment_pair(spec, settings_.pair, crop_rng);
    const Matrix* pushes[2] = {&segs.a.values, &segs.b.values};
    for (int i = 0; i < 2; ++i) {
      if (settings_.augment.mixup_before_rrc) {
        bank_.push(*pushes[i]);
      } else {
        Rng rrc_rng = sample_rng.derive("rrc", static_cast<std::uint64_t>(i));
        dsp::MelSpec seg;
        seg.values = *pushes[i];
        bank_.push(views::rrc_augment(seg, settings_.augment, rrc_rng).values);
      }
    }
  }
}

void Trainer::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.manifest.config_hash = config_hash_;
  ckpt.manifest.step = step_;
  ckpt.manifest.epoch = step_ / steps_per_epoch_;
  ckpt.manifest.seed = settings_.seed;

  auto& student = const_cast<ssl::StudentParams&>(student_);
  auto& teacher = const_cast<ssl::TeacherParams&>(teacher_);
  student.visit([&](const std::string& name, nn::Param& p) {
    ckpt.tensors.emplace("student." + name, p.value);
  });
  student.visit_buffers([&](const std::string& name, Matrix& buf) {
    ckpt.tensors.emplace("student." + name, buf);
  });
  teacher.visit([&](const std::string& name, nn::Param& p) {
    ckpt.tensors.emplace("teacher." + name, p.value);
  });
  teacher.visit_buffers([&](const std::string& name, Matrix& buf) {
    ckpt.tensors.emplace("teacher." + name, buf);
  });

  auto& adamw = const_cast<AdamW&>(adamw_);
  std::size_t i = 0;
  student.visit([&](const std::string& name, nn::Param&) {
    ckpt.tensors.emplace("adam.m." + name, adamw.moments_m()[i]);
    ckpt.tensors.emplace("adam.v." + name, adamw.moments_v()[i]);
    ++i;
  });

  save_checkpoint(ckpt, path);
}

void Trainer::load(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path, config_hash_);

  auto restore = [&](const std::string& name, Matrix& dst) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw DataError("checkpoint is missing tensor " + name);
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols())
      throw DataError("checkpoint tensor shape mismatch at " + name);
    dst = it->second;
  };

  student_.visit([&](const std::string& name, nn::Param& p) {
    restore("student." + name, p.value);
  });
  student_.visit_buffers([&](const std::string& name, Matrix& buf) {
    restore("student." + name, buf);
  });
  teacher_.visit([&](const std::string& name, nn::Param& p) {
    restore("teacher." + name, p.value);
  });
  teacher_.visit_buffers([&](const std::string& name, Matrix& buf) {
    restore("teacher." + name, buf);
  });

  std::size_t i = 0;
  student_.visit([&](const std::string& name, nn::Param&) {
    restore("adam.m." + name, adamw_.moments_m()[i]);
    restore("adam.v." + name, adamw_.moments_v()[i]);
    ++i;
  });

  step_ = ckpt.manifest.step;
  adamw_.set_steps_taken(step_);
  rebuild_bank();
}

namespace {

// Optional per-clip cache under $MELSSL_CACHE_DIR.
std::string cache_path_for(const std::string& wav_path,
                           const dsp::MelParams& mel_params,
                           const dsp::GlobalStats& stats, int target_rate) {
  const char* dir = std::getenv("MELSSL_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return {};
  std::uint64_t key = fnv1a64(wav_path);
  key = hash_combine(key, mel_params.hash());
  key = hash_combine(key, static_cast<std::uint64_t>(target_rate));
  std::uint64_t bits;
  std::memcpy(&bits, &stats.min_val, 8);
  key = hash_combine(key, bits);
  std::memcpy(&bits, &stats.max_val, 8);
  key = hash_combine(key, bits);
  return std::string(dir) + "/mel_" + hash_hex(key) + ".bin";
}

bool read_cached_mel(const std::string& path, Matrix& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::int64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (!in || rows <= 0 || cols <= 0 || rows > (1 << 24) || cols > (1 << 16))
    return false;
  out.resize(rows, cols);
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(sizeof(double)) * rows * cols);
  return static_cast<bool>(in);
}

void write_cached_mel(const std::string& path, const Matrix& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return;  // cache is best-effort
  const std::int64_t rows = mel.rows(), cols = mel.cols();
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  out.write(reinterpret_cast<const char*>(mel.data()),
            static_cast<std::streamsize>(sizeof(double)) * rows * cols);
}

}  // namespace

Matrix load_normalized_mel(const std::string& wav_path,
                           const dsp::MelParams& mel_params,
                           const dsp::GlobalStats& stats, int target_rate) {
  const auto cache_path =
      cache_path_for(wav_path, mel_params, stats, target_rate);
  Matrix cached;
  if (!cache_path.empty() && read_cached_mel(cache_path, cached))
    return cached;

  const auto clip = dsp::resample(dsp::read_wav(wav_path), target_rate);
  const auto spec = dsp::mel_spectrogram(clip, mel_params);
  Matrix values = dsp::normalize(spec, stats).values;
  if (!cache_path.empty()) write_cached_mel(cache_path, values);
  return values;
}

std::vector<Matrix> load_normalized_mels(const std::vector<std::string>& paths,
                                         const dsp::MelParams& mel_params,
                                         const dsp::GlobalStats& stats,
                                         int target_rate) {
  std::vector<Matrix> mels(paths.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(paths.size()); ++i) {
    try {
      mels[static_cast<std::size_t>(i)] = load_normalized_mel(
          paths[static_cast<std::size_t>(i)], mel_params, stats, target_rate);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return mels;
}

}  // namespace melssl::train

// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/eval.hpp"

#include "melssl/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace melssl::eval {

void TaskSpec::validate() const {
  if (n_classes < 2) throw ConfigError("task: n_classes must be >= 2");
  if (folds < 1) throw ConfigError("task: folds must be >= 1");
  if (!(chunk_s > 0) || !(max_crop_s >= chunk_s))
    throw ConfigError("task: need 0 < chunk_s <= max_crop_s");
}

void EvalConfig::validate() const {
  if (epochs < 1 || batch_size < 1)
    throw ConfigError("eval: epochs and batch_size must be >= 1");
  if (warmup_epochs < 0) throw ConfigError("eval: warmup_epochs must be >= 0");
  if (lr_grid.empty()) throw ConfigError("eval: lr grid is empty");
  for (double lr : lr_grid)
    if (!(lr > 0)) throw ConfigError("eval: lr grid entries must be > 0");
}

double accuracy(const PredictionSet& preds) {
  if (preds.multi_label)
    throw ConfigError("accuracy: single-label tasks only");
  const auto n = preds.scores.rows();
  if (n == 0) throw ConfigError("accuracy: empty prediction set");
  if (static_cast<Eigen::Index>(preds.labels.size()) != n)
    throw ConfigError("accuracy: labels/scores size mismatch");

  std::int64_t hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < preds.scores.cols(); ++c)
      if (preds.scores(i, c) > preds.scores(i, best)) best = c;  // ties keep lowest
    if (best == preds.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

// Average precision for one class; tied groups contribute the expectation
// of precision-at-rank over random orderings within the group.
double average_precision(const std::vector<double>& scores,
                         const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::size_t n_pos = 0;
  for (bool f : positive) n_pos += f ? 1 : 0;
  if (n_pos == 0) return -1.0;  // caller skips

  double contrib = 0.0;
  std::size_t i = 0, rank_before = 0, tp_before = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t p = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) ++p;
      ++j;
    }
    const std::size_t g = j - i;
    if (p > 0) {
      if (g == 1) {
        contrib += static_cast<double>(tp_before + 1) /
                   static_cast<double>(rank_before + 1);
      } else {
        const double pf = static_cast<double>(p);
        const double gf = static_cast<double>(g);
        for (std::size_t k = 1; k <= g; ++k) {
          const double expected_tp_inside =
              1.0 + static_cast<double>(k - 1) * (pf - 1.0) / (gf - 1.0);
          contrib += (pf / gf) *
                     (static_cast<double>(tp_before) + expected_tp_inside) /
                     static_cast<double>(rank_before + k);
        }
      }
    }
    rank_before += g;
    tp_before += p;
    i = j;
  }
  return contrib / static_cast<double>(n_pos);
}

}  // namespace

double mean_average_precision(const PredictionSet& preds) {
  if (!preds.multi_label)
    throw ConfigError("mean_average_precision: multi-label tasks only");
  const auto n = preds.scores.rows();
  const auto k = preds.scores.cols();
  if (n == 0) throw ConfigError("mean_average_precision: empty set");
  if (static_cast<Eigen::Index>(preds.multi_labels.size()) != n)
    throw ConfigError("mean_average_precision: labels/scores size mismatch");

  double total = 0.0;
  int classes_used = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<bool> positive(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      scores[static_cast<std::size_t>(i)] = preds.scores(i, c);
      const auto& labels = preds.multi_labels[static_cast<std::size_t>(i)];
      positive[static_cast<std::size_t>(i)] =
          std::find(labels.begin(), labels.end(), static_cast<int>(c)) !=
          labels.end();
    }
    const double ap = average_precision(scores, positive);
    if (ap >= 0.0) {
      total += ap;
      ++classes_used;
    }
  }
  if (classes_used == 0)
    throw DataError("mean_average_precision: no class has a positive");
  return total / classes_used;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> chunk_spans(
    Eigen::Index frames, Eigen::Index chunk_frames, Eigen::Index max_frames,
    Eigen::Index min_frames) {
  if (frames < min_frames)
    throw DataError("chunk_spans: clip shorter than the minimum span");

  Eigen::Index start = 0;
  Eigen::Index len = frames;
  if (len > max_frames) {  // center crop
    start = (frames - max_frames) / 2;
    len = max_frames;
  }

  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  if (len <= chunk_frames) {
    spans.emplace_back(start, len);
    return spans;
  }
  Eigen::Index pos = start;
  while (pos + chunk_frames <= start + len) {
    spans.emplace_back(pos, chunk_frames);
    pos += chunk_frames;
  }
  const Eigen::Index rem = start + len - pos;
  if (rem >= min_frames) spans.emplace_back(pos, rem);
  return spans;
}

Vector chunk_and_embed(const Matrix& mel, const encoder::EncoderState& enc,
                       encoder::EmbeddingMode mode, const TaskSpec& task,
                       double hop_s, encoder::LinearEvalPooling pooling) {
  // Chunks can never exceed what the positional table covers.
  const auto capacity = static_cast<Eigen::Index>(enc.cfg.max_tokens) *
                        enc.cfg.stack_frames;
  const auto chunk_frames = std::min(
      capacity,
      static_cast<Eigen::Index>(std::lround(task.chunk_s / hop_s)));
  const auto max_frames =
      static_cast<Eigen::Index>(std::lround(task.max_crop_s / hop_s));
  const auto spans = chunk_spans(mel.rows(), chunk_frames, max_frames,
                                 enc.cfg.stack_frames);

  Vector total;
  const bool keep_blocks = mode == encoder::EmbeddingMode::linear_eval;
  for (const auto& [start, len] : spans) {
    dsp::MelSpec chunk;
    chunk.values = mel.middleRows(start, len);
    const auto seq = encoder::encode(chunk, enc, keep_blocks);
    const auto emb = encoder::extract_embedding(seq, mode, pooling);
    if (total.size() == 0)
      total = emb.vector;
    else
      total += emb.vector;
  }
  return total / static_cast<double>(spans.size());
}

Matrix embed_dataset(const std::vector<Matrix>& mels,
                     const encoder::EncoderState& enc,
                     encoder::EmbeddingMode mode, const TaskSpec& task,
                     double hop_s, encoder::LinearEvalPooling pooling) {
  if (mels.empty()) throw DataError("embed_dataset: no clips");
  const Eigen::Index dim = encoder::embedding_dim(enc.cfg, mode, pooling);
  Matrix features(static_cast<Eigen::Index>(mels.size()), dim);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(mels.size()); ++i) {
    try {
      features.row(static_cast<Eigen::Index>(i)) =
          chunk_and_embed(mels[static_cast<std::size_t>(i)], enc, mode, task,
                          hop_s, pooling)
              .transpose();
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return features;
}

Matrix LinearClassifier::predict(const Matrix& features) const {
  Matrix x = features;
  if (feature_mean.size() > 0) {
    x.rowwise() -= feature_mean.transpose();
    x.array().rowwise() /= feature_scale.transpose().array();
  }
  return (x * w).rowwise() + b.row(0);
}

namespace {

Matrix one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw DataError("labels out of range for the task's class count");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

Matrix softmax_targets_grad(const Matrix& logits, const Matrix& targets) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::Array<double, 1, Eigen::Dynamic> e =
        (logits.row(i).array() - mx).exp();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p - targets;
}

Matrix sigmoid_targets_grad(const Matrix& logits, const Matrix& targets) {
  return (1.0 / (1.0 + (-logits.array()).exp())).matrix() - targets;
}

// Plain SGD-with-momentum training of one linear layer on fixed features.
LinearClassifier train_linear_layer(const Matrix& x, const Matrix& targets,
                                    const EvalConfig& cfg,
                                    const TaskSpec& task, double lr0) {
  const Eigen::Index n = x.rows(), dim = x.cols();
  const auto k = static_cast<Eigen::Index>(task.n_classes);

  LinearClassifier clf;
  if (cfg.standardize_features) {
    clf.feature_mean = x.colwise().mean().transpose();
    Vector var = ((x.rowwise() - clf.feature_mean.transpose()))
                     .array()
                     .square()
                     .colwise()
                     .mean()
                     .transpose();
    clf.feature_scale = (var.array().sqrt() + 1e-8).matrix();
  }
  Matrix xs = x;
  if (cfg.standardize_features) {
    xs.rowwise() -= clf.feature_mean.transpose();
    xs.array().rowwise() /= clf.feature_scale.transpose().array();
  }

  clf.w = Matrix::Zero(dim, k);
  clf.b = Matrix::Zero(1, k);
  Matrix vel_w = Matrix::Zero(dim, k);
  Matrix vel_b = Matrix::Zero(1, k);

  const auto batch = std::min<Eigen::Index>(cfg.batch_size, n);
  const auto steps_per_epoch = (n + batch - 1) / batch;
  train::CosineSchedule lr_schedule{lr0, cfg.final_lr,
                                    cfg.warmup_epochs * steps_per_epoch,
                                    cfg.epochs * steps_per_epoch};

  Rng run_rng = Rng(cfg.seed).derive("probe");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = run_rng.derive("epoch", static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);
    for (Eigen::Index pos = 0; pos < n; pos += batch) {
      const auto sz = std::min<Eigen::Index>(batch, n - pos);
      Matrix xb(sz, dim), yb(sz, k);
      for (Eigen::Index r = 0; r < sz; ++r) {
        const auto src = order[static_cast<std::size_t>(pos + r)];
        xb.row(r) = xs.row(src);
        yb.row(r) = targets.row(src);
      }
      const Matrix logits = (xb * clf.w).rowwise() + clf.b.row(0);
      const Matrix dlogits =
          (task.multi_label ? sigmoid_targets_grad(logits, yb)
                            : softmax_targets_grad(logits, yb)) /
          static_cast<double>(sz);

      const double lr = train::cosine_value(lr_schedule, step);
      Matrix gw = xb.transpose() * dlogits;
      Matrix gb = dlogits.colwise().sum();
      vel_w = cfg.momentum * vel_w + gw;
      vel_b = cfg.momentum * vel_b + gb;
      clf.w -= lr * vel_w;
      clf.b -= lr * vel_b;
      ++step;
    }
  }
  return clf;
}

double metric_of(const Matrix& scores, const std::vector<int>& labels,
                 const TaskSpec& task) {
  PredictionSet preds;
  preds.scores = scores;
  preds.multi_label = task.multi_label;
  if (task.multi_label) {
    preds.multi_labels.reserve(labels.size());
    for (int label : labels) preds.multi_labels.push_back({label});
    return mean_average_precision(preds);
  }
  preds.labels = labels;
  return accuracy(preds);
}

}  // namespace

double evaluate_probe(const LinearClassifier& clf, const Matrix& x,
                      const std::vector<int>& y, const TaskSpec& task) {
  return metric_of(clf.predict(x), y, task);
}

ProbeResult train_linear_probe(const Matrix& train_x,
                               const std::vector<int>& train_y,
                               const Matrix& valid_x,
                               const std::vector<int>& valid_y,
                               const EvalConfig& cfg, const TaskSpec& task) {
  cfg.validate();
  task.validate();
  if (train_x.rows() < 2) throw DataError("probe: training set too small");
  const std::set<int> distinct(train_y.begin(), train_y.end());
  if (distinct.size() < 2)
    throw DataError("probe: degenerate single-class training set");

  const Matrix targets = one_hot(train_y, task.n_classes);

  ProbeResult best;
  bool have_best = false;
  for (double lr : cfg.lr_grid) {
    LinearClassifier clf = train_linear_layer(train_x, targets, cfg, task, lr);
    const double metric =
        valid_x.rows() > 0 ? evaluate_probe(clf, valid_x, valid_y, task)
                           : evaluate_probe(clf, train_x, train_y, task);
    if (!have_best || metric > best.valid_metric) {
      best.classifier = std::move(clf);
      best.lr_chosen = lr;
      best.valid_metric = metric;
      have_best = true;
    }
  }
  return best;
}

KFoldResult kfold_evaluate(const Matrix& features,
                           const std::vector<int>& labels,
                           const std::vector<int>& fold_ids,
                           const EvalConfig& cfg, const TaskSpec& task) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()) ||
      labels.size() != fold_ids.size())
    throw ConfigError("kfold: inconsistent input sizes");
  std::set<int> folds(fold_ids.begin(), fold_ids.end());
  if (folds.size() < 2) throw ConfigError("kfold: need >= 2 folds");

  KFoldResult result;
  for (int fold : folds) {
    std::vector<int> pool, test_idx;
    for (std::size_t i = 0; i < fold_ids.size(); ++i)
      (fold_ids[i] == fold ? test_idx : pool).push_back(static_cast<int>(i));
    if (test_idx.empty()) throw DataError("kfold: empty fold");

    // Deterministic stratified carve-out: every 5th pool item per class
    // becomes the validation split for the lr search.
    std::vector<int> train_idx, valid_idx;
    std::map<int, int> per_class;
    for (int i : pool) {
      const int c = labels[static_cast<std::size_t>(i)];
      ((per_class[c]++ % 5 == 4) ? valid_idx : train_idx).push_back(i);
    }

    auto gather = [&](const std::vector<int>& idx, Matrix& x,
                      std::vector<int>& y) {
      x.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
      y.clear();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) =
            features.row(idx[r]);
        y.push_back(labels[static_cast<std::size_t>(idx[r])]);
      }
    };
    Matrix train_x, valid_x, test_x;
    std::vector<int> train_y, valid_y, test_y;
    gather(train_idx, train_x, train_y);
    gather(valid_idx, valid_x, valid_y);
    gather(test_idx, test_x, test_y);

    const auto probe =
        train_linear_probe(train_x, train_y, valid_x, valid_y, cfg, task);
    result.per_fold.push_back(
        evaluate_probe(probe.classifier, test_x, test_y, task));
  }
  result.mean = std::accumulate(result.per_fold.begin(), result.per_fold.end(),
                                0.0) /
                static_cast<double>(result.per_fold.size());
  return result;
}

namespace {

struct FinetuneForward {
  std::vector<std::vector<encoder::EncodeCache>> caches;  // per clip, per chunk
  std::vector<std::vector<Eigen::Index>> chunk_tokens;
  Matrix embeddings;  // B x 2d
};

FinetuneForward finetune_forward(const encoder::EncoderState& enc,
                                 const std::vector<Matrix>& mels,
                                 const TaskSpec& task, double hop_s,
                                 bool keep_caches) {
  const auto capacity = static_cast<Eigen::Index>(enc.cfg.max_tokens) *
                        enc.cfg.stack_frames;
  const auto chunk_frames = std::min(
      capacity,
      static_cast<Eigen::Index>(std::lround(task.chunk_s / hop_s)));
  const auto max_frames =
      static_cast<Eigen::Index>(std::lround(task.max_crop_s / hop_s));
  const Eigen::Index d = enc.cfg.dim;

  FinetuneForward fwd;
  const auto b = static_cast<Eigen::Index>(mels.size());
  fwd.embeddings.resize(b, 2 * d);
  fwd.caches.resize(static_cast<std::size_t>(b));
  fwd.chunk_tokens.resize(static_cast<std::size_t>(b));

#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < b; ++i) {
    const Matrix& mel = mels[static_cast<std::size_t>(i)];
    const auto spans = chunk_spans(mel.rows(), chunk_frames, max_frames,
                                   enc.cfg.stack_frames);
    auto& clip_caches = fwd.caches[static_cast<std::size_t>(i)];
    auto& clip_tokens = fwd.chunk_tokens[static_cast<std::size_t>(i)];
    if (keep_caches) clip_caches.resize(spans.size());

    Vector total = Vector::Zero(2 * d);
    for (std::size_t s = 0; s < spans.size(); ++s) {
      dsp::MelSpec chunk;
      chunk.values = mel.middleRows(spans[s].first, spans[s].second);
      auto seq = encoder::encode(chunk, enc, false,
                                 keep_caches ? &clip_caches[s] : nullptr);
      total += encoder::extract_embedding(seq, encoder::EmbeddingMode::finetune)
                   .vector;
      clip_tokens.push_back(seq.tokens.rows() - 1);
    }
    fwd.embeddings.row(i) =
        (total / static_cast<double>(spans.size())).transpose();
  }
  return fwd;
}

void finetune_backward(const encoder::EncoderState& enc,
                       encoder::EncoderState& grads,
                       const FinetuneForward& fwd, const Matrix& d_emb) {
  const Eigen::Index d = enc.cfg.dim;
  const auto b = static_cast<Eigen::Index>(fwd.caches.size());

  const int n_chunks = static_cast<int>(std::min<Eigen::Index>(b, 8));
  std::vector<encoder::EncoderState> partials(static_cast<std::size_t>(n_chunks));
  for (auto& g : partials) {
    g = enc;
    g.zero_grads();
  }

#pragma omp parallel for schedule(static)
  for (int c = 0; c < n_chunks; ++c) {
    auto& sink = partials[static_cast<std::size_t>(c)];
    for (Eigen::Index i = c; i < b; i += n_chunks) {
      const auto& clip_caches = fwd.caches[static_cast<std::size_t>(i)];
      const auto& clip_tokens = fwd.chunk_tokens[static_cast<std::size_t>(i)];
      const double inv = 1.0 / static_cast<double>(clip_caches.size());
      for (std::size_t s = 0; s < clip_caches.size(); ++s) {
        const Eigen::Index t = clip_tokens[s];
        Matrix d_tokens = Matrix::Zero(t + 1, d);
        d_tokens.row(0) = inv * d_emb.row(i).head(d);
        const Matrix d_avg =
            (inv / static_cast<double>(t)) * d_emb.row(i).tail(d);
        for (Eigen::Index r = 1; r <= t; ++r) d_tokens.row(r) = d_avg;
        encoder::encode_backward(enc, sink, clip_caches[s], d_tokens);
      }
    }
  }

  for (auto& g : partials) {
    std::vector<Matrix*> dst, src;
    grads.visit([&](const std::string&, nn::Param& p) { dst.push_back(&p.grad); });
    g.visit([&](const std::string&, nn::Param& p) { src.push_back(&p.grad); });
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
  }
}

}  // namespace

Matrix finetune_predict(const encoder::EncoderState& enc,
                        const LinearClassifier& head,
                        const std::vector<Matrix>& mels, const TaskSpec& task,
                        double hop_s) {
  const auto fwd = finetune_forward(enc, mels, task, hop_s, false);
  return head.predict(fwd.embeddings);
}

FinetuneResult finetune(encoder::EncoderState& enc,
                        const std::vector<Matrix>& train_mels,
                        const std::vector<int>& train_y,
                        const std::vector<Matrix>& valid_mels,
                        const std::vector<int>& valid_y,
                        const EvalConfig& cfg, const TaskSpec& task,
                        double hop_s) {
  cfg.validate();
  task.validate();
  if (train_mels.size() != train_y.size() || train_mels.size() < 2)
    throw DataError("finetune: bad training set");

  const Matrix targets = one_hot(train_y, task.n_classes);
  const encoder::EncoderState pretrained = enc;  // each grid run starts here

  views::AugmentConfig rrc_cfg;  // finetune RRC follows the BYOL-A ranges
  rrc_cfg.mixup_alpha = 0.0;

  FinetuneResult best;
  bool have_best = false;

  for (double lr0 : cfg.lr_grid) {
    encoder::EncoderState candidate = pretrained;
    LinearClassifier head;
    head.w = Matrix::Zero(2 * candidate.cfg.dim, task.n_classes);
    head.b = Matrix::Zero(1, task.n_classes);

    // Momentum buffers: encoder params in visit order, then head.
    std::vector<nn::Param*> params;
    candidate.visit([&](const std::string&, nn::Param& p) { params.push_back(&p); });
    std::vector<Matrix> velocity;
    velocity.reserve(params.size());
    for (auto* p : params)
      velocity.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    Matrix vel_w = Matrix::Zero(head.w.rows(), head.w.cols());
    Matrix vel_b = Matrix::Zero(1, task.n_classes);

    const auto n = static_cast<Eigen::Index>(train_mels.size());
    const auto batch = std::min<Eigen::Index>(cfg.batch_size, n);
    const auto steps_per_epoch = (n + batch - 1) / batch;
    train::CosineSchedule lr_schedule{lr0, cfg.final_lr,
                                      cfg.warmup_epochs * steps_per_epoch,
                                      cfg.epochs * steps_per_epoch};

    Rng run_rng = Rng(cfg.seed).derive("finetune");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng epoch_rng = run_rng.derive("epoch", static_cast<std::uint64_t>(epoch));
      epoch_rng.shuffle(order);
      for (Eigen::Index pos = 0; pos < n; pos += batch) {
        const auto sz = std::min<Eigen::Index>(batch, n - pos);
        std::vector<Matrix> batch_mels(static_cast<std::size_t>(sz));
        Matrix batch_targets(sz, task.n_classes);
        for (Eigen::Index r = 0; r < sz; ++r) {
          const auto src = order[static_cast<std::size_t>(pos + r)];
          batch_mels[static_cast<std::size_t>(r)] =
              train_mels[static_cast<std::size_t>(src)];
          batch_targets.row(r) = targets.row(src);
        }

        Rng step_rng = epoch_rng.derive("step", static_cast<std::uint64_t>(step));
        if (cfg.use_rrc) {
          for (Eigen::Index r = 0; r < sz; ++r) {
            Rng rrc_rng = step_rng.derive("rrc", static_cast<std::uint64_t>(r));
            dsp::MelSpec spec;
            spec.values = batch_mels[static_cast<std::size_t>(r)];
            batch_mels[static_cast<std::size_t>(r)] =
                views::rrc_augment(spec, rrc_cfg, rrc_rng).values;
          }
        }
        if (cfg.mixup_alpha > 0.0 && sz >= 2) {
          // Pair each clip with a random partner; mix inputs in the linear
          // amplitude domain and labels convexly with the same lambda.
          const std::vector<Matrix> pre_mix_mels = batch_mels;
          const Matrix pre_mix_targets = batch_targets;
          for (Eigen::Index r = 0; r < sz; ++r) {
            Rng mix_rng = step_rng.derive("mixup", static_cast<std::uint64_t>(r));
            const double lambda = mix_rng.uniform(0.0, cfg.mixup_alpha);
            const auto partner = static_cast<Eigen::Index>(
                mix_rng.uniform_int(0, static_cast<std::int64_t>(sz) - 1));
            auto& mine = batch_mels[static_cast<std::size_t>(r)];
            const auto& other = pre_mix_mels[static_cast<std::size_t>(partner)];
            if (lambda == 0.0 || partner == r ||
                other.rows() != mine.rows() || other.cols() != mine.cols())
              continue;
            mine = ((1.0 - lambda) * mine.array().exp() +
                    lambda * other.array().exp())
                       .log()
                       .matrix();
            batch_targets.row(r) = (1.0 - lambda) * pre_mix_targets.row(r) +
                                   lambda * pre_mix_targets.row(partner);
          }
        }

        const auto fwd =
            finetune_forward(candidate, batch_mels, task, hop_s, true);
        const Matrix logits = (fwd.embeddings * head.w).rowwise() + head.b.row(0);
        const Matrix dlogits =
            (task.multi_label ? sigmoid_targets_grad(logits, batch_targets)
                              : softmax_targets_grad(logits, batch_targets)) /
            static_cast<double>(sz);

        candidate.zero_grads();
        const Matrix d_emb = dlogits * head.w.transpose();
        finetune_backward(candidate, candidate, fwd, d_emb);

        const double lr = train::cosine_value(lr_schedule, step);
        for (std::size_t p = 0; p < params.size(); ++p) {
          velocity[p] = cfg.momentum * velocity[p] + params[p]->grad;
          params[p]->value -= lr * velocity[p];
        }
        Matrix gw = fwd.embeddings.transpose() * dlogits;
        vel_w = cfg.momentum * vel_w + gw;
        vel_b = cfg.momentum * vel_b + dlogits.colwise().sum();
        head.w -= lr * vel_w;
        head.b -= lr * vel_b;
        ++step;
      }
    }

    const double metric =
        valid_mels.empty()
            ? metric_of(finetune_predict(candidate, head, train_mels, task, hop_s),
                        train_y, task)
            : metric_of(finetune_predict(candidate, head, valid_mels, task, hop_s),
                        valid_y, task);
    if (!have_best || metric > best.valid_metric) {
      best.head = std::move(head);
      best.lr_chosen = lr0;
      best.valid_metric = metric;
      enc = candidate;
      have_best = true;
    }
  }
  return best;
}

}  // namespace melssl::eval

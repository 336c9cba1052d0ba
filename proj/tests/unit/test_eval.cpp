// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/eval.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace melssl;

namespace {

// Independent O(n^2) oracle for accuracy: direct counting.
double accuracy_oracle(const Matrix& scores, const std::vector<int>& labels) {
  int hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    int arg = 0;
    double best = scores(i, 0);
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > best) {
        best = scores(i, c);
        arg = static_cast<int>(c);
      }
    if (arg == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

// Independent AP oracle for distinct scores: precision at each positive's
// rank computed by direct counting.
double ap_oracle_distinct(const std::vector<double>& scores,
                          const std::vector<bool>& positive) {
  double total = 0.0;
  int n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    ++n_pos;
    int rank = 0, tp = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++rank;
        if (positive[j]) ++tp;
      }
    }
    total += static_cast<double>(tp) / static_cast<double>(rank);
  }
  return n_pos > 0 ? total / n_pos : -1.0;
}

// Plain AP for one concrete ordering (used to enumerate tie permutations).
double ap_of_order(const std::vector<int>& order,
                   const std::vector<bool>& positive) {
  double total = 0.0;
  int n_pos = 0, tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (positive[static_cast<std::size_t>(order[r])]) {
      ++tp;
      ++n_pos;
      total += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return total / n_pos;
}

encoder::EncoderConfig tiny_encoder() {
  encoder::EncoderConfig cfg;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.dim = 16;
  cfg.inner_dim = 32;
  cfg.stack_frames = 2;
  cfg.input_bins = 8;
  cfg.max_tokens = 300;
  return cfg;
}

}  // namespace

TEST_CASE("accuracy") {
  SUBCASE("all correct and half correct by construction") {
    eval::PredictionSet preds;
    preds.scores = Matrix::Zero(4, 3);
    preds.labels = {0, 1, 2, 0};
    for (int i = 0; i < 4; ++i) preds.scores(i, preds.labels[static_cast<std::size_t>(i)]) = 1.0;
    CHECK(eval::accuracy(preds) == 1.0);

    // Invert half of them.
    preds.scores.row(0).setZero();
    preds.scores(0, 1) = 1.0;
    preds.scores.row(1).setZero();
    preds.scores(1, 2) = 1.0;
    CHECK(eval::accuracy(preds) == 0.5);
  }

  SUBCASE("ties break toward the lowest class index") {
    eval::PredictionSet preds;
    preds.scores = Matrix::Ones(1, 3);
    preds.labels = {0};
    CHECK(eval::accuracy(preds) == 1.0);
    preds.labels = {1};
    CHECK(eval::accuracy(preds) == 0.0);
  }

  SUBCASE("matches the counting oracle on random instances") {
    Rng rng(60);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = static_cast<Eigen::Index>(rng.uniform_int(1, 100));
      const auto k = static_cast<Eigen::Index>(rng.uniform_int(2, 10));
      eval::PredictionSet preds;
      preds.scores.resize(n, k);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < k; ++c)
          preds.scores(i, c) = rng.uniform(-5.0, 5.0);
      preds.labels.clear();
      for (Eigen::Index i = 0; i < n; ++i)
        preds.labels.push_back(
            static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1)));
      CHECK(eval::accuracy(preds) == accuracy_oracle(preds.scores, preds.labels));
    }
  }

  SUBCASE("empty set is rejected") {
    eval::PredictionSet preds;
    preds.scores.resize(0, 3);
    CHECK_THROWS_AS(eval::accuracy(preds), ConfigError);
  }
}

TEST_CASE("mean average precision") {
  SUBCASE("perfect ranking gives 1") {
    eval::PredictionSet preds;
    preds.multi_label = true;
    preds.scores.resize(4, 2);
    preds.scores << 0.9, 0.1, 0.8, 0.9, 0.1, 0.8, 0.2, 0.2;
    preds.multi_labels = {{0}, {0, 1}, {1}, {}};
    CHECK(eval::mean_average_precision(preds) == doctest::Approx(1.0));
  }

  SUBCASE("one positive ranked second of four gives 0.5") {
    eval::PredictionSet preds;
    preds.multi_label = true;
    preds.scores.resize(4, 1);
    preds.scores << 0.9, 0.7, 0.5, 0.3;
    preds.multi_labels = {{}, {0}, {}, {}};
    CHECK(eval::mean_average_precision(preds) == doctest::Approx(0.5));
  }

  SUBCASE("matches the brute-force oracle on random distinct instances") {
    Rng rng(61);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = static_cast<std::size_t>(rng.uniform_int(2, 100));
      const auto k = static_cast<Eigen::Index>(rng.uniform_int(2, 10));
      eval::PredictionSet preds;
      preds.multi_label = true;
      preds.scores.resize(static_cast<Eigen::Index>(n), k);
      preds.multi_labels.assign(n, {});
      bool any_positive = false;
      for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < k; ++c) {
          preds.scores(static_cast<Eigen::Index>(i), c) = rng.uniform(0.0, 1.0);
          if (rng.uniform() < 0.3) {
            preds.multi_labels[i].push_back(static_cast<int>(c));
            any_positive = true;
          }
        }
      if (!any_positive) continue;

      double expected = 0.0;
      int used = 0;
      for (Eigen::Index c = 0; c < k; ++c) {
        std::vector<double> scores(n);
        std::vector<bool> positive(n, false);
        for (std::size_t i = 0; i < n; ++i) {
          scores[i] = preds.scores(static_cast<Eigen::Index>(i), c);
          positive[i] = std::find(preds.multi_labels[i].begin(),
                                  preds.multi_labels[i].end(),
                                  static_cast<int>(c)) !=
                        preds.multi_labels[i].end();
        }
        const double ap = ap_oracle_distinct(scores, positive);
        if (ap >= 0.0) {
          expected += ap;
          ++used;
        }
      }
      expected /= used;
      CHECK(std::abs(eval::mean_average_precision(preds) - expected) <= 1e-9);
    }
  }

  SUBCASE("tied scores equal the expectation over tie orderings") {
    // All four examples tied; enumerate all permutations of the order.
    const std::vector<bool> positive = {true, false, true, false};
    eval::PredictionSet preds;
    preds.multi_label = true;
    preds.scores = Matrix::Constant(4, 1, 0.5);
    preds.multi_labels = {{0}, {}, {0}, {}};

    std::vector<int> order = {0, 1, 2, 3};
    double total = 0.0;
    int count = 0;
    std::sort(order.begin(), order.end());
    do {
      total += ap_of_order(order, positive);
      ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(eval::mean_average_precision(preds) ==
          doctest::Approx(total / count).epsilon(1e-12));
  }

  SUBCASE("invariant under strictly monotone score transforms") {
    Rng rng(62);
    eval::PredictionSet preds;
    preds.multi_label = true;
    preds.scores.resize(20, 3);
    preds.multi_labels.assign(20, {});
    for (Eigen::Index i = 0; i < 20; ++i)
      for (Eigen::Index c = 0; c < 3; ++c) {
        preds.scores(i, c) = rng.uniform(-2.0, 2.0);
        if (rng.uniform() < 0.4)
          preds.multi_labels[static_cast<std::size_t>(i)].push_back(
              static_cast<int>(c));
      }
    const double base = eval::mean_average_precision(preds);
    auto transformed = preds;
    transformed.scores =
        (preds.scores.array() * 3.0).exp() + 1.0;  // strictly increasing
    CHECK(eval::mean_average_precision(transformed) ==
          doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("no positives anywhere is an error") {
    eval::PredictionSet preds;
    preds.multi_label = true;
    preds.scores = Matrix::Ones(3, 2);
    preds.multi_labels = {{}, {}, {}};
    CHECK_THROWS_AS(eval::mean_average_precision(preds), DataError);
  }
}

TEST_CASE("chunking rule") {
  const Eigen::Index chunk = 600, max = 1200, min_frames = 4;

  auto frames_for = [](double seconds) {
    // no-padding frame count at 16 kHz, 25 ms window, 10 ms hop
    const auto samples = static_cast<std::int64_t>(std::llround(seconds * 16000));
    return static_cast<Eigen::Index>(1 + (samples - 400) / 160);
  };

  SUBCASE("chunk counts across the duration grid") {
    CHECK(eval::chunk_spans(frames_for(3.0), chunk, max, min_frames).size() == 1);
    CHECK(eval::chunk_spans(frames_for(5.9), chunk, max, min_frames).size() == 1);
    CHECK(eval::chunk_spans(frames_for(6.0), chunk, max, min_frames).size() == 1);
    CHECK(eval::chunk_spans(frames_for(7.0), chunk, max, min_frames).size() == 2);
    CHECK(eval::chunk_spans(frames_for(11.9), chunk, max, min_frames).size() == 2);
    CHECK(eval::chunk_spans(frames_for(12.0), chunk, max, min_frames).size() == 2);
    CHECK(eval::chunk_spans(frames_for(13.0), chunk, max, min_frames).size() == 2);
    CHECK(eval::chunk_spans(frames_for(20.0), chunk, max, min_frames).size() == 2);
  }

  SUBCASE("center-crop boundaries for a 20 s clip") {
    const auto spans = eval::chunk_spans(frames_for(20.0), chunk, max, min_frames);
    REQUIRE(spans.size() == 2);
    // 20 s -> 1998 frames; crop starts at (1998-1200)/2 = 399 (~4 s).
    CHECK(spans[0].first == 399);
    CHECK(spans[0].second == 600);
    CHECK(spans[1].first == 999);
    CHECK(spans[1].second == 600);
  }

  SUBCASE("13 s crop boundaries") {
    const auto spans = eval::chunk_spans(frames_for(13.0), chunk, max, min_frames);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].first == 49);  // (1298 - 1200) / 2
    CHECK(spans[1].first == 649);
  }

  SUBCASE("remainder chunks keep their length") {
    const auto spans = eval::chunk_spans(frames_for(7.0), chunk, max, min_frames);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].second == 600);
    CHECK(spans[1].second == frames_for(7.0) - 600);
  }

  SUBCASE("exhaustive sweep: span arithmetic is consistent") {
    for (double seconds = 0.5; seconds <= 20.0; seconds += 0.1) {
      const auto frames = frames_for(seconds);
      const auto spans = eval::chunk_spans(frames, chunk, max, min_frames);
      REQUIRE(!spans.empty());
      const auto expected =
          frames <= chunk
              ? 1
              : std::min<Eigen::Index>(frames, max) / chunk +
                    ((std::min<Eigen::Index>(frames, max) % chunk >= min_frames)
                         ? 1
                         : 0);
      CHECK(static_cast<Eigen::Index>(spans.size()) == expected);
      for (std::size_t s = 1; s < spans.size(); ++s)
        CHECK(spans[s].first == spans[s - 1].first + spans[s - 1].second);
    }
  }
}

TEST_CASE("chunked embedding averages chunk embeddings") {
  Rng rng(63);
  const auto enc = encoder::init_encoder(tiny_encoder(), rng);
  eval::TaskSpec task;
  task.n_classes = 2;
  task.chunk_s = 1.0;    // 100-frame chunks at 10 ms hop
  task.max_crop_s = 2.0;

  Rng mrng(64);
  Matrix mel(200, 8);
  for (Eigen::Index r = 0; r < 200; ++r)
    for (Eigen::Index c = 0; c < 8; ++c) mel(r, c) = mrng.uniform(0.0, 1.0);

  const Vector emb = eval::chunk_and_embed(
      mel, enc, encoder::EmbeddingMode::finetune, task, 0.01);

  dsp::MelSpec a, b;
  a.values = mel.topRows(100);
  b.values = mel.bottomRows(100);
  const auto ea = encoder::extract_embedding(encoder::encode(a, enc),
                                             encoder::EmbeddingMode::finetune);
  const auto eb = encoder::extract_embedding(encoder::encode(b, enc),
                                             encoder::EmbeddingMode::finetune);
  CHECK((emb - 0.5 * (ea.vector + eb.vector)).cwiseAbs().maxCoeff() < 1e-12);

  SUBCASE("short clips go through directly") {
    Matrix short_mel = mel.topRows(60);
    const Vector direct = eval::chunk_and_embed(
        short_mel, enc, encoder::EmbeddingMode::finetune, task, 0.01);
    dsp::MelSpec s;
    s.values = short_mel;
    const auto es = encoder::extract_embedding(encoder::encode(s, enc),
                                               encoder::EmbeddingMode::finetune);
    CHECK((direct - es.vector).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("linear probe") {
  eval::TaskSpec task;
  task.n_classes = 2;
  eval::EvalConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  cfg.lr_grid = {1e-2, 1e-1};
  cfg.seed = 9;

  SUBCASE("separable toy set reaches 99% train accuracy") {
    Rng rng(65);
    const int n = 120;
    Matrix x(n, 4);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      const int label = i % 2;
      for (int c = 0; c < 4; ++c)
        x(i, c) = rng.uniform(0.0, 0.5) + (label == 1 ? 1.0 : 0.0);
      y.push_back(label);
    }
    const auto probe = eval::train_linear_probe(x, y, Matrix(0, 4), {}, cfg, task);
    CHECK(eval::evaluate_probe(probe.classifier, x, y, task) >= 0.99);
  }

  SUBCASE("single-class training set is rejected") {
    Matrix x = Matrix::Random(10, 4);
    std::vector<int> y(10, 0);
    CHECK_THROWS_AS(eval::train_linear_probe(x, y, Matrix(0, 4), {}, cfg, task),
                    DataError);
  }

  SUBCASE("probe training leaves the encoder untouched") {
    Rng rng(66);
    auto enc_cfg = tiny_encoder();
    const auto enc = encoder::init_encoder(enc_cfg, rng);
    // Checksum the encoder before/after embedding + probing.
    auto checksum = [&]() {
      double sum = 0.0;
      const_cast<encoder::EncoderState&>(enc).visit(
          [&](const std::string&, nn::Param& p) { sum += p.value.sum(); });
      return sum;
    };
    const double before = checksum();

    std::vector<Matrix> mels;
    std::vector<int> labels;
    Rng mrng(67);
    for (int i = 0; i < 12; ++i) {
      Matrix mel(40, 8);
      for (Eigen::Index r = 0; r < 40; ++r)
        for (Eigen::Index c = 0; c < 8; ++c)
          mel(r, c) = mrng.uniform(0.0, 1.0) + (i % 2);
      mels.push_back(mel);
      labels.push_back(i % 2);
    }
    eval::TaskSpec t;
    t.n_classes = 2;
    const Matrix feats = eval::embed_dataset(
        mels, enc, encoder::EmbeddingMode::linear_eval, t, 0.01);
    auto cfg2 = cfg;
    cfg2.epochs = 10;
    const auto probe =
        eval::train_linear_probe(feats, labels, Matrix(0, feats.cols()), {},
                                 cfg2, t);
    (void)probe;
    CHECK(checksum() == before);
  }
}

TEST_CASE("kfold evaluation") {
  Rng rng(68);
  const int n = 80;
  Matrix x(n, 6);
  std::vector<int> y;
  std::vector<int> folds;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    for (int c = 0; c < 6; ++c)
      x(i, c) = rng.uniform(0.0, 0.4) + 0.8 * label;
    y.push_back(label);
    folds.push_back(i % 4);
  }
  eval::TaskSpec task;
  task.n_classes = 2;
  task.folds = 4;
  eval::EvalConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.lr_grid = {1e-1};
  cfg.seed = 4;

  const auto result = eval::kfold_evaluate(x, y, folds, cfg, task);
  REQUIRE(result.per_fold.size() == 4);

  SUBCASE("mean equals the arithmetic mean of the folds") {
    const double mean = std::accumulate(result.per_fold.begin(),
                                        result.per_fold.end(), 0.0) /
                        4.0;
    CHECK(result.mean == doctest::Approx(mean).epsilon(1e-12));
  }

  SUBCASE("fold relabeling permutes the score multiset") {
    std::vector<int> permuted(folds.size());
    for (std::size_t i = 0; i < folds.size(); ++i)
      permuted[i] = (folds[i] + 1) % 4;
    const auto result2 = eval::kfold_evaluate(x, y, permuted, cfg, task);
    auto a = result.per_fold;
    auto b = result2.per_fold;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }

  SUBCASE("fewer than two folds is rejected") {
    std::vector<int> ones(folds.size(), 1);
    CHECK_THROWS_AS(eval::kfold_evaluate(x, y, ones, cfg, task), ConfigError);
  }
}

TEST_CASE("finetune improves on or matches a probe on an easy task") {
  // Tiny, clearly separable task: both probe and finetune should saturate.
  Rng rng(69);
  auto enc = encoder::init_encoder(tiny_encoder(), rng);

  std::vector<Matrix> mels;
  std::vector<int> labels;
  Rng mrng(70);
  for (int i = 0; i < 16; ++i) {
    const int label = i % 2;
    Matrix mel(40, 8);
    for (Eigen::Index r = 0; r < 40; ++r)
      for (Eigen::Index c = 0; c < 8; ++c)
        mel(r, c) = mrng.uniform(0.0, 0.3) + label * 0.8;
    mels.push_back(mel);
    labels.push_back(label);
  }
  eval::TaskSpec task;
  task.n_classes = 2;

  eval::EvalConfig probe_cfg;
  probe_cfg.epochs = 30;
  probe_cfg.batch_size = 16;
  probe_cfg.lr_grid = {1e-1};
  probe_cfg.seed = 3;
  const Matrix feats = eval::embed_dataset(
      mels, enc, encoder::EmbeddingMode::linear_eval, task, 0.01);
  const auto probe = eval::train_linear_probe(feats, labels,
                                              Matrix(0, feats.cols()), {},
                                              probe_cfg, task);
  const double probe_acc =
      eval::evaluate_probe(probe.classifier, feats, labels, task);

  eval::EvalConfig ft_cfg;
  ft_cfg.epochs = 8;
  ft_cfg.batch_size = 8;
  ft_cfg.warmup_epochs = 2;
  ft_cfg.lr_grid = {1e-2};
  ft_cfg.seed = 3;
  ft_cfg.standardize_features = false;
  const auto tuned = eval::finetune(enc, mels, labels, {}, {}, ft_cfg, task, 0.01);
  const Matrix scores = eval::finetune_predict(enc, tuned.head, mels, task, 0.01);
  eval::PredictionSet preds;
  preds.scores = scores;
  preds.labels = labels;
  CHECK(eval::accuracy(preds) >= probe_acc - 1e-12);
}

TEST_CASE("finetune label mixup blends one-hot targets") {
  // Direct check of the convex-combination rule the trainer applies.
  const double lambda = 0.3;
  Vector a = Vector::Zero(3), b = Vector::Zero(3);
  a(0) = 1.0;
  b(2) = 1.0;
  const Vector mixed = (1.0 - lambda) * a + lambda * b;
  CHECK(mixed(0) == doctest::Approx(0.7));
  CHECK(mixed(2) == doctest::Approx(0.3));
  CHECK(mixed.sum() == doctest::Approx(1.0));
}

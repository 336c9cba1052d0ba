// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/encoder.hpp"
#include "melssl/manifest.hpp"
#include "melssl/rng.hpp"
#include "melssl/views.hpp"

#include <optional>
#include <string>
#include <vector>

namespace melssl::eval {

/** Downstream task description. */
struct TaskSpec {
  std::string name = "task";
  bool multi_label = false;
  int n_classes = 2;
  int folds = 1;            // 1 = single split
  double chunk_s = 6.0;
  double max_crop_s = 12.0;

  void validate() const;
};

/** Probe / finetune protocol settings. */
struct EvalConfig {
  int epochs = 100;            // linear default; finetune uses 50
  int batch_size = 1024;       // linear default; finetune uses 512
  int warmup_epochs = 0;       // finetune uses 5
  double momentum = 0.9;
  double final_lr = 1e-6;
  std::vector<double> lr_grid = {3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  bool standardize_features = true;
  double mixup_alpha = 0.0;    // finetune-only input+label mixup
  bool use_rrc = false;        // finetune-only
  std::uint64_t seed = 0;
  encoder::LinearEvalPooling pooling =
      encoder::LinearEvalPooling::per_block_concat;

  void validate() const;
};

/** Scores plus ground truth for metric computation. */
struct PredictionSet {
  Matrix scores;                          // n_examples x n_classes
  std::vector<int> labels;               // single-label ground truth
  std::vector<std::vector<int>> multi_labels;  // multi-label ground truth
  bool multi_label = false;
};

/** Fraction of argmax hits; ties break toward the lowest class index. */
double accuracy(const PredictionSet& preds);

/**
 * Macro mean over classes of average precision (area under the PR step
 * curve; tied scores contribute their expectation over tie orderings).
 * Classes without positives are skipped.
 */
double mean_average_precision(const PredictionSet& preds);

/** Chunk layout for a clip of `frames` rows: center crop then 6 s chunks. */
std::vector<std::pair<Eigen::Index, Eigen::Index>> chunk_spans(
    Eigen::Index frames, Eigen::Index chunk_frames, Eigen::Index max_frames,
    Eigen::Index min_frames);

/** Chunked embedding of one (normalized) clip, averaged over chunks. */
Vector chunk_and_embed(const Matrix& mel, const encoder::EncoderState& enc,
                       encoder::EmbeddingMode mode, const TaskSpec& task,
                       double hop_s,
                       encoder::LinearEvalPooling pooling =
                           encoder::LinearEvalPooling::per_block_concat);

/** Embeds every clip (read-only encoder, parallel over clips). */
Matrix embed_dataset(const std::vector<Matrix>& mels,
                     const encoder::EncoderState& enc,
                     encoder::EmbeddingMode mode, const TaskSpec& task,
                     double hop_s,
                     encoder::LinearEvalPooling pooling =
                         encoder::LinearEvalPooling::per_block_concat);

/** Linear classifier with the feature standardizer it was trained with. */
struct LinearClassifier {
  Matrix w;       // dim x n_classes
  Matrix b;       // 1 x n_classes
  Vector feature_mean;
  Vector feature_scale;

  Matrix predict(const Matrix& features) const;
};

struct ProbeResult {
  LinearClassifier classifier;
  double lr_chosen = 0.0;
  double valid_metric = 0.0;
};

/**
 * SGD-trained linear layer on frozen embeddings: cosine anneal to 1e-6,
 * no augmentation; the initial lr is grid-searched on the valid split.
 */
ProbeResult train_linear_probe(const Matrix& train_x,
                               const std::vector<int>& train_y,
                               const Matrix& valid_x,
                               const std::vector<int>& valid_y,
                               const EvalConfig& cfg, const TaskSpec& task);

double evaluate_probe(const LinearClassifier& clf, const Matrix& x,
                      const std::vector<int>& y, const TaskSpec& task);

struct KFoldResult {
  std::vector<double> per_fold;
  double mean = 0.0;
};

/** Per-fold train/test rotation over fold ids; unweighted mean. */
KFoldResult kfold_evaluate(const Matrix& features,
                           const std::vector<int>& labels,
                           const std::vector<int>& fold_ids,
                           const EvalConfig& cfg, const TaskSpec& task);

struct FinetuneResult {
  LinearClassifier head;  // over finetune-mode embeddings
  double lr_chosen = 0.0;
  double valid_metric = 0.0;
};

/**
 * Joint SGD over encoder + linear head (5-epoch warmup, cosine to 1e-6),
 * with optional input+label mixup and RRC. Mutates the encoder.
 */
FinetuneResult finetune(encoder::EncoderState& enc,
                        const std::vector<Matrix>& train_mels,
                        const std::vector<int>& train_y,
                        const std::vector<Matrix>& valid_mels,
                        const std::vector<int>& valid_y,
                        const EvalConfig& cfg, const TaskSpec& task,
                        double hop_s);

/** Test-time scores for a finetuned encoder + head. */
Matrix finetune_predict(const encoder::EncoderState& enc,
                        const LinearClassifier& head,
                        const std::vector<Matrix>& mels, const TaskSpec& task,
                        double hop_s);

}  // namespace melssl::eval

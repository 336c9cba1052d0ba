// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/encoder.hpp"
#include "melssl/views.hpp"

#include <string>
#include <vector>

namespace melssl::ssl {

using nn::Param;

/** Projector/predictor MLP shape: linear -> batch norm -> ReLU -> linear. */
struct HeadConfig {
  int hidden_dim = 4096;
  int out_dim = 256;

  void validate() const;
};

struct HeadParams {
  Param w1, b1;              // in x hidden
  Param bn_gamma, bn_beta;   // 1 x hidden
  Param w2, b2;              // hidden x out
  Matrix bn_running_mean;    // 1 x hidden, buffers (not learnable)
  Matrix bn_running_var;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  Eigen::Index in_dim() const { return w1.value.rows(); }
  Eigen::Index hidden_dim() const { return w1.value.cols(); }
  Eigen::Index out_dim() const { return w2.value.cols(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "w1", w1);
    f(prefix + "b1", b1);
    f(prefix + "bn_gamma", bn_gamma);
    f(prefix + "bn_beta", bn_beta);
    f(prefix + "w2", w2);
    f(prefix + "b2", b2);
  }

  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    f(prefix + "bn_running_mean", bn_running_mean);
    f(prefix + "bn_running_var", bn_running_var);
  }

  void zero_grads() {
    visit("", [](const std::string&, Param& p) { p.zero_grad(); });
  }
};

HeadParams init_head(Eigen::Index in_dim, const HeadConfig& cfg, Rng& rng);

/** Forward activations for head_backward / running-stat updates. */
struct HeadCache {
  Matrix x_in;
  Matrix h_pre;      // pre-BN
  Matrix h_hat;      // normalized
  Matrix relu_in;    // post-BN affine
  Matrix batch_mean; // 1 x hidden
  Matrix batch_var;  // 1 x hidden (biased)
  bool train_mode = false;
};

/**
 * linear -> batch norm -> ReLU -> linear. Batch statistics in train mode,
 * running statistics in eval mode. Pure: running stats are only changed by
 * update_running_stats().
 */
Matrix head_forward(const Matrix& x, const HeadParams& params, bool train_mode,
                    HeadCache* cache = nullptr);

/** Accumulates parameter grads, returns dX. Cache must come from train or
 *  eval forward consistent with how the loss was computed. */
Matrix head_backward(const HeadParams& params, HeadParams& grad_sink,
                     const HeadCache& cache, const Matrix& d_out);

/** Folds cached batch statistics into the running estimates. */
void update_running_stats(HeadParams& params, const HeadCache& cache);

/** Student: encoder + projector + predictor. */
struct StudentParams {
  encoder::EncoderState encoder;
  HeadParams projector;
  HeadParams predictor;

  template <class F>
  void visit(F&& f) {
    encoder.visit([&](const std::string& name, Param& p) {
      f("encoder." + name, p);
    });
    projector.visit("projector.", f);
    predictor.visit("predictor.", f);
  }

  template <class F>
  void visit_buffers(F&& f) {
    projector.visit_buffers("projector.", f);
    predictor.visit_buffers("predictor.", f);
  }

  void zero_grads() {
    visit([](const std::string&, Param& p) { p.zero_grad(); });
  }
};

/** Teacher: encoder + projector only; never receives gradient. */
struct TeacherParams {
  encoder::EncoderState encoder;
  HeadParams projector;

  template <class F>
  void visit(F&& f) {
    encoder.visit([&](const std::string& name, Param& p) {
      f("encoder." + name, p);
    });
    projector.visit("projector.", f);
  }

  template <class F>
  void visit_buffers(F&& f) {
    projector.visit_buffers("projector.", f);
  }
};

StudentParams init_student(const encoder::EncoderConfig& enc_cfg,
                           const HeadConfig& head_cfg, Rng& rng);

/** Teacher starts as a copy of the student's encoder + projector. */
TeacherParams init_teacher(const StudentParams& student);

/** Loss between L2-normalized vectors: ||p/|p| - z/|z|||^2 = 2 - 2 cos. */
double normalized_mse(const Vector& p, const Vector& z);

/** d(normalized_mse)/dp with z treated as a constant. */
Vector normalized_mse_grad(const Vector& p, const Vector& z);

/** Behavioral switches for the loss computation. */
struct SslOptions {
  bool teacher_eval_mode = true;  // teacher heads use running statistics
  bool use_predictor = true;      // ablation hook: identity predictor
};

/**
 * Forward state for a batch of positive pairs. Student rows are laid out
 * as [x_prime views; x views] so both loss terms share one head batch.
 */
struct PairBatchForward {
  double loss = 0.0;
  Matrix student_h;   // 2B x d
  Matrix p;           // 2B x out
  Matrix z;           // 2B x out (teacher targets, row-aligned)
  HeadCache proj_cache, pred_cache;
  std::vector<encoder::EncodeCache> encoder_caches;  // 2B, only if kept
  bool has_caches = false;
};

/**
 * Total loss over a batch: for each pair, nmse(student(X'), teacher(X)) +
 * nmse(student(X), teacher(X')), averaged over pairs.
 */
PairBatchForward symmetric_loss_forward(
    const std::vector<views::ViewPair>& pairs, const StudentParams& student,
    const TeacherParams& teacher, bool train_mode, bool keep_caches,
    const SslOptions& opts = {});

double symmetric_loss(const std::vector<views::ViewPair>& pairs,
                      const StudentParams& student,
                      const TeacherParams& teacher, bool train_mode,
                      const SslOptions& opts = {});

/**
 * Backward from the batch loss into every student parameter's grad.
 * Teacher parameters are never touched (stop-gradient).
 */
void symmetric_loss_backward(const StudentParams& student,
                             StudentParams& grad_sink,
                             const PairBatchForward& fwd,
                             const SslOptions& opts = {});

/** phi <- m * phi + (1 - m) * theta over parameters and BN buffers. */
void ema_update(TeacherParams& teacher, const StudentParams& student,
                double m);

}  // namespace melssl::ssl

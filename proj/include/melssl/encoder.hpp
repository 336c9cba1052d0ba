// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/dsp.hpp"
#include "melssl/nn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace melssl::encoder {

using dsp::MelSpec;
using nn::Param;

/** Transformer encoder architecture. */
struct EncoderConfig {
  int n_blocks = 12;
  int n_heads = 6;
  int dim = 384;
  int inner_dim = 1536;
  int stack_frames = 4;
  int input_bins = 64;
  int max_tokens = 150;  // positional table covers max_tokens + 1 (CLS)

  static EncoderConfig small_preset();
  static EncoderConfig base_preset();
  void validate() const;
};

/** One pre-norm transformer block: x += MHSA(LN(x)); x += MLP(LN(x)). */
struct EncoderBlock {
  Param ln1_gamma, ln1_beta;
  Param wq, bq, wk, bk, wv, bv;
  Param wo, bo;
  Param ln2_gamma, ln2_beta;
  Param w1, b1, w2, b2;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "ln1_gamma", ln1_gamma);
    f(prefix + "ln1_beta", ln1_beta);
    f(prefix + "wq", wq);
    f(prefix + "bq", bq);
    f(prefix + "wk", wk);
    f(prefix + "bk", bk);
    f(prefix + "wv", wv);
    f(prefix + "bv", bv);
    f(prefix + "wo", wo);
    f(prefix + "bo", bo);
    f(prefix + "ln2_gamma", ln2_gamma);
    f(prefix + "ln2_beta", ln2_beta);
    f(prefix + "w1", w1);
    f(prefix + "b1", b1);
    f(prefix + "w2", w2);
    f(prefix + "b2", b2);
  }
};

/** Learnable encoder state: patch projection, CLS token, positions, blocks. */
struct EncoderState {
  EncoderConfig cfg;
  Param patch_weight;   // (stack_frames * input_bins) x dim
  Param patch_bias;     // 1 x dim
  Param cls_token;      // 1 x dim
  Param pos_embedding;  // (max_tokens + 1) x dim
  std::vector<EncoderBlock> blocks;

  template <class F>
  void visit(F&& f) {
    f(std::string("patch_weight"), patch_weight);
    f(std::string("patch_bias"), patch_bias);
    f(std::string("cls_token"), cls_token);
    f(std::string("pos_embedding"), pos_embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block" + std::to_string(i) + ".", f);
  }

  void zero_grads() {
    visit([](const std::string&, Param& p) { p.zero_grad(); });
  }
};

EncoderState init_encoder(const EncoderConfig& cfg, Rng& rng);

/** Exact learnable-parameter count (encoder only, heads excluded). */
std::int64_t param_count(const EncoderConfig& cfg);

/** Output token sequence; row 0 is the CLS position. */
struct TokenSequence {
  Matrix tokens;                  // (T+1) x dim
  std::vector<Matrix> per_block;  // optional per-block outputs, same shape
};

enum class EmbeddingMode { pretrain, linear_eval, finetune };

/** How linear-eval embeddings pool the per-block sequences. */
enum class LinearEvalPooling { per_block_concat, joint_average };

struct SegmentEmbedding {
  Vector vector;
  EmbeddingMode mode = EmbeddingMode::pretrain;
};

/** Stacks stack_frames consecutive frames (L truncated down to a multiple). */
Matrix frame_stack(const Matrix& values, int stack_frames);

/** Frame stacking followed by the linear patch projection; T x dim. */
Matrix frame_stack_and_project(const MelSpec& spec, const EncoderState& state);

/** Per-sample forward activations kept for the backward pass. */
struct EncodeCache {
  Matrix stacked;  // T x (stack*C)
  Matrix x0;       // (T+1) x d, after CLS + positions
  struct BlockCache {
    Matrix x_in;
    Matrix ln1_out;
    Vector ln1_mean, ln1_rstd;
    Matrix q, k, v;
    std::vector<Matrix> att;  // per head, (T+1) x (T+1)
    Matrix att_concat;
    Matrix x_mid;
    Matrix ln2_out;
    Vector ln2_mean, ln2_rstd;
    Matrix h_pre;
  };
  std::vector<BlockCache> blocks;
  Eigen::Index tokens = 0;  // T
};

/**
 * Full encoder forward. When cache is null only the output sequence is
 * produced (cheaper path for frozen/teacher use).
 */
TokenSequence encode(const MelSpec& spec, const EncoderState& state,
                     bool keep_per_block = false, EncodeCache* cache = nullptr);

/**
 * Backward through encode(); reads weights from `state` and accumulates
 * into the Param::grad fields of `grad_sink` (may alias `state`).
 */
void encode_backward(const EncoderState& state, EncoderState& grad_sink,
                     const EncodeCache& cache, const Matrix& d_out);

SegmentEmbedding extract_embedding(
    const TokenSequence& seq, EmbeddingMode mode,
    LinearEvalPooling pooling = LinearEvalPooling::per_block_concat);

/** Embedding dimension for a mode under the given config. */
Eigen::Index embedding_dim(const EncoderConfig& cfg, EmbeddingMode mode,
                           LinearEvalPooling pooling =
                               LinearEvalPooling::per_block_concat);

}  // namespace melssl::encoder

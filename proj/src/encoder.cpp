// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/encoder.hpp"

#include <cmath>

namespace melssl::encoder {

EncoderConfig EncoderConfig::small_preset() {
  EncoderConfig cfg;
  cfg.n_blocks = 12;
  cfg.n_heads = 6;
  cfg.dim = 384;
  cfg.inner_dim = 1536;
  return cfg;
}

EncoderConfig EncoderConfig::base_preset() {
  EncoderConfig cfg;
  cfg.n_blocks = 12;
  cfg.n_heads = 12;
  cfg.dim = 768;
  cfg.inner_dim = 3072;
  return cfg;
}

void EncoderConfig::validate() const {
  if (n_blocks < 1 || n_heads < 1 || dim < 1)
    throw ConfigError("encoder: blocks/heads/dim must be >= 1");
  if (dim % n_heads != 0)
    throw ConfigError("encoder: dim must be divisible by n_heads");
  if (inner_dim < dim) throw ConfigError("encoder: inner_dim must be >= dim");
  if (stack_frames < 1) throw ConfigError("encoder: stack_frames must be >= 1");
  if (input_bins < 1) throw ConfigError("encoder: input_bins must be >= 1");
  if (max_tokens < 1) throw ConfigError("encoder: max_tokens must be >= 1");
}

EncoderState init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderState state;
  state.cfg = cfg;
  const int d = cfg.dim;
  const int sc = cfg.stack_frames * cfg.input_bins;

  Rng init = rng.derive("encoder_init");
  nn::init_trunc_normal(state.patch_weight, sc, d, 0.02, init, /*decay=*/true);
  nn::init_const(state.patch_bias, 1, d, 0.0);
  nn::init_trunc_normal(state.cls_token, 1, d, 0.02, init, /*decay=*/false);
  nn::init_trunc_normal(state.pos_embedding, cfg.max_tokens + 1, d, 0.02, init,
                        /*decay=*/false);

  state.blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
  for (auto& blk : state.blocks) {
    nn::init_const(blk.ln1_gamma, 1, d, 1.0);
    nn::init_const(blk.ln1_beta, 1, d, 0.0);
    nn::init_trunc_normal(blk.wq, d, d, 0.02, init, true);
    nn::init_const(blk.bq, 1, d, 0.0);
    nn::init_trunc_normal(blk.wk, d, d, 0.02, init, true);
    nn::init_const(blk.bk, 1, d, 0.0);
    nn::init_trunc_normal(blk.wv, d, d, 0.02, init, true);
    nn::init_const(blk.bv, 1, d, 0.0);
    nn::init_trunc_normal(blk.wo, d, d, 0.02, init, true);
    nn::init_const(blk.bo, 1, d, 0.0);
    nn::init_const(blk.ln2_gamma, 1, d, 1.0);
    nn::init_const(blk.ln2_beta, 1, d, 0.0);
    nn::init_trunc_normal(blk.w1, d, cfg.inner_dim, 0.02, init, true);
    nn::init_const(blk.b1, 1, cfg.inner_dim, 0.0);
    nn::init_trunc_normal(blk.w2, cfg.inner_dim, d, 0.02, init, true);
    nn::init_const(blk.b2, 1, d, 0.0);
  }
  return state;
}

std::int64_t param_count(const EncoderConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.dim;
  const std::int64_t inner = cfg.inner_dim;
  const std::int64_t sc =
      static_cast<std::int64_t>(cfg.stack_frames) * cfg.input_bins;
  const std::int64_t per_block = 2 * d                    // ln1
                                 + 3 * (d * d + d)        // qkv
                                 + (d * d + d)            // out proj
                                 + 2 * d                  // ln2
                                 + (d * inner + inner)    // mlp in
                                 + (inner * d + d);       // mlp out
  return (sc * d + d)                                     // patch projection
         + d                                              // cls
         + (cfg.max_tokens + 1) * d                       // positions
         + cfg.n_blocks * per_block;
}

Matrix frame_stack(const Matrix& values, int stack_frames) {
  if (values.rows() < stack_frames)
    throw DataError("frame_stack: fewer frames than stack_frames");
  const Eigen::Index t = values.rows() / stack_frames;  // truncate
  const Eigen::Index c = values.cols();
  Matrix out(t, static_cast<Eigen::Index>(stack_frames) * c);
  for (Eigen::Index i = 0; i < t; ++i)
    for (int s = 0; s < stack_frames; ++s)
      out.row(i).segment(s * c, c) = values.row(i * stack_frames + s);
  return out;
}

Matrix frame_stack_and_project(const MelSpec& spec,
                               const EncoderState& state) {
  if (spec.values.cols() != state.cfg.input_bins)
    throw DataError("encoder: input bin count mismatch");
  const Matrix stacked = frame_stack(spec.values, state.cfg.stack_frames);
  return nn::linear_forward(stacked, state.patch_weight, state.patch_bias);
}

namespace {

struct AttentionScratch {
  Matrix q, k, v, att_concat;
  std::vector<Matrix> att;
};

void attention_forward(const EncoderBlock& blk, const Matrix& x_norm,
                       int n_heads, AttentionScratch& s) {
  const Eigen::Index d = x_norm.cols();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  s.q = nn::linear_forward(x_norm, blk.wq, blk.bq);
  s.k = nn::linear_forward(x_norm, blk.wk, blk.bk);
  s.v = nn::linear_forward(x_norm, blk.wv, blk.bv);
  s.att.resize(static_cast<std::size_t>(n_heads));
  s.att_concat.resize(x_norm.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = s.q.middleCols(h * dh, dh);
    const auto kh = s.k.middleCols(h * dh, dh);
    const auto vh = s.v.middleCols(h * dh, dh);
    Matrix scores = scale * (qh * kh.transpose());
    s.att[static_cast<std::size_t>(h)] = nn::softmax_rows(scores);
    s.att_concat.middleCols(h * dh, dh).noalias() =
        s.att[static_cast<std::size_t>(h)] * vh;
  }
}

}  // namespace

TokenSequence encode(const MelSpec& spec, const EncoderState& state,
                     bool keep_per_block, EncodeCache* cache) {
  const EncoderConfig& cfg = state.cfg;
  if (spec.values.rows() < cfg.stack_frames)
    throw DataError("encode: input has fewer frames than stack_frames");

  const Matrix stacked = frame_stack(spec.values, cfg.stack_frames);
  const Eigen::Index t = stacked.rows();
  if (t > cfg.max_tokens)
    throw DataError("encode: sequence exceeds positional table (" +
                    std::to_string(t) + " > " +
                    std::to_string(cfg.max_tokens) + " tokens)");

  const Matrix projected =
      nn::linear_forward(stacked, state.patch_weight, state.patch_bias);

  Matrix x(t + 1, cfg.dim);
  x.row(0) = state.cls_token.value.row(0);
  x.bottomRows(t) = projected;
  x += state.pos_embedding.value.topRows(t + 1);

  if (cache != nullptr) {
    cache->stacked = stacked;
    cache->x0 = x;
    cache->tokens = t;
    cache->blocks.assign(static_cast<std::size_t>(cfg.n_blocks), {});
  }

  TokenSequence seq;
  if (keep_per_block) seq.per_block.reserve(static_cast<std::size_t>(cfg.n_blocks));

  AttentionScratch scratch;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const EncoderBlock& blk = state.blocks[static_cast<std::size_t>(b)];
    EncodeCache::BlockCache* bc =
        cache ? &cache->blocks[static_cast<std::size_t>(b)] : nullptr;

    Vector ln1_mean, ln1_rstd;
    const Matrix ln1_out =
        nn::layernorm_forward(x, blk.ln1_gamma, blk.ln1_beta, ln1_mean, ln1_rstd);
    attention_forward(blk, ln1_out, cfg.n_heads, scratch);
    const Matrix att_out =
        nn::linear_forward(scratch.att_concat, blk.wo, blk.bo);
    const Matrix x_mid = x + att_out;

    Vector ln2_mean, ln2_rstd;
    const Matrix ln2_out = nn::layernorm_forward(x_mid, blk.ln2_gamma,
                                                 blk.ln2_beta, ln2_mean, ln2_rstd);
    const Matrix h_pre = nn::linear_forward(ln2_out, blk.w1, blk.b1);
    const Matrix h_act = nn::gelu(h_pre);
    const Matrix mlp_out = nn::linear_forward(h_act, blk.w2, blk.b2);

    if (bc != nullptr) {
      bc->x_in = x;
      bc->ln1_out = ln1_out;
      bc->ln1_mean = ln1_mean;
      bc->ln1_rstd = ln1_rstd;
      bc->q = scratch.q;
      bc->k = scratch.k;
      bc->v = scratch.v;
      bc->att = scratch.att;
      bc->att_concat = scratch.att_concat;
      bc->x_mid = x_mid;
      bc->ln2_out = ln2_out;
      bc->ln2_mean = ln2_mean;
      bc->ln2_rstd = ln2_rstd;
      bc->h_pre = h_pre;
    }

    x = x_mid + mlp_out;
    if (keep_per_block) seq.per_block.push_back(x);
  }

  seq.tokens = std::move(x);
  return seq;
}

void encode_backward(const EncoderState& state, EncoderState& grad_sink,
                     const EncodeCache& cache, const Matrix& d_out) {
  const EncoderConfig& cfg = state.cfg;
  const Eigen::Index dh = cfg.dim / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = d_out;
  for (int b = cfg.n_blocks - 1; b >= 0; --b) {
    const EncoderBlock& blk = state.blocks[static_cast<std::size_t>(b)];
    EncoderBlock& gblk = grad_sink.blocks[static_cast<std::size_t>(b)];
    const auto& bc = cache.blocks[static_cast<std::size_t>(b)];

    // MLP branch: x_out = x_mid + W2 gelu(W1 LN2(x_mid) + b1) + b2
    const Matrix h_act = nn::gelu(bc.h_pre);
    Matrix d_hact = nn::linear_backward(h_act, gblk.w2, gblk.b2, dx);
    Matrix d_hpre = nn::gelu_backward(bc.h_pre, d_hact);
    Matrix d_ln2 = nn::linear_backward(bc.ln2_out, gblk.w1, gblk.b1, d_hpre);
    Matrix d_xmid = nn::layernorm_backward(bc.x_mid, blk.ln2_gamma, bc.ln2_mean,
                                           bc.ln2_rstd, gblk.ln2_gamma,
                                           gblk.ln2_beta, d_ln2);
    d_xmid += dx;  // residual

    // Attention branch: x_mid = x_in + Wo concat_h(A_h V_h) + bo
    Matrix d_concat =
        nn::linear_backward(bc.att_concat, gblk.wo, gblk.bo, d_xmid);
    Matrix dq(bc.q.rows(), bc.q.cols());
    Matrix dk(bc.k.rows(), bc.k.cols());
    Matrix dv(bc.v.rows(), bc.v.cols());
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = bc.q.middleCols(h * dh, dh);
      const auto kh = bc.k.middleCols(h * dh, dh);
      const auto vh = bc.v.middleCols(h * dh, dh);
      const Matrix& a = bc.att[static_cast<std::size_t>(h)];
      const auto d_oh = d_concat.middleCols(h * dh, dh);

      const Matrix d_a = d_oh * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * d_oh;
      const Matrix d_s = nn::softmax_rows_backward(a, d_a);
      dq.middleCols(h * dh, dh).noalias() = scale * (d_s * kh);
      dk.middleCols(h * dh, dh).noalias() = scale * (d_s.transpose() * qh);
    }
    Matrix d_ln1 = nn::linear_backward(bc.ln1_out, gblk.wq, gblk.bq, dq);
    d_ln1 += nn::linear_backward(bc.ln1_out, gblk.wk, gblk.bk, dk);
    d_ln1 += nn::linear_backward(bc.ln1_out, gblk.wv, gblk.bv, dv);
    Matrix d_xin = nn::layernorm_backward(bc.x_in, blk.ln1_gamma, bc.ln1_mean,
                                          bc.ln1_rstd, gblk.ln1_gamma,
                                          gblk.ln1_beta, d_ln1);
    dx = d_xin + d_xmid;  // residual
  }

  // Input assembly: x0 = [cls; projected] + positions
  grad_sink.pos_embedding.grad.topRows(cache.tokens + 1) += dx;
  grad_sink.cls_token.grad.row(0) += dx.row(0);
  const Matrix d_proj = dx.bottomRows(cache.tokens);
  nn::linear_backward(cache.stacked, grad_sink.patch_weight,
                      grad_sink.patch_bias, d_proj);
}

SegmentEmbedding extract_embedding(const TokenSequence& seq,
                                   EmbeddingMode mode,
                                   LinearEvalPooling pooling) {
  const Eigen::Index d = seq.tokens.cols();
  const Eigen::Index t = seq.tokens.rows() - 1;
  if (t < 1) throw DataError("extract_embedding: no non-CLS tokens");

  SegmentEmbedding emb;
  emb.mode = mode;
  switch (mode) {
    case EmbeddingMode::pretrain:
      emb.vector = seq.tokens.row(0).transpose();
      break;
    case EmbeddingMode::finetune: {
      emb.vector.resize(2 * d);
      emb.vector.head(d) = seq.tokens.row(0).transpose();
      emb.vector.tail(d) =
          seq.tokens.bottomRows(t).colwise().mean().transpose();
      break;
    }
    case EmbeddingMode::linear_eval: {
      if (seq.per_block.empty())
        throw ConfigError(
            "extract_embedding: linear_eval needs per-block outputs");
      const auto n = static_cast<Eigen::Index>(seq.per_block.size());
      if (pooling == LinearEvalPooling::per_block_concat) {
        emb.vector.resize(d * (n + 1));
        emb.vector.head(d) = seq.tokens.row(0).transpose();
        for (Eigen::Index b = 0; b < n; ++b)
          emb.vector.segment(d * (b + 1), d) =
              seq.per_block[static_cast<std::size_t>(b)]
                  .bottomRows(t)
                  .colwise()
                  .mean()
                  .transpose();
      } else {
        emb.vector.resize(2 * d);
        emb.vector.head(d) = seq.tokens.row(0).transpose();
        Vector avg = Vector::Zero(d);
        for (const auto& blk : seq.per_block)
          avg += blk.bottomRows(t).colwise().mean().transpose();
        emb.vector.tail(d) = avg / static_cast<double>(n);
      }
      break;
    }
  }
  return emb;
}

Eigen::Index embedding_dim(const EncoderConfig& cfg, EmbeddingMode mode,
                           LinearEvalPooling pooling) {
  switch (mode) {
    case EmbeddingMode::pretrain:
      return cfg.dim;
    case EmbeddingMode::finetune:
      return 2 * cfg.dim;
    case EmbeddingMode::linear_eval:
      return pooling == LinearEvalPooling::per_block_concat
                 ? static_cast<Eigen::Index>(cfg.dim) * (cfg.n_blocks + 1)
                 : 2 * static_cast<Eigen::Index>(cfg.dim);
  }
  throw ConfigError("embedding_dim: unknown mode");
}

}  // namespace melssl::encoder

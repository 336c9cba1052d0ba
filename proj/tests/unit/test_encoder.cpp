// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/encoder.hpp"

#include "doctest.h"

#include <cmath>

using namespace melssl;

namespace {

encoder::EncoderConfig tiny_config() {
  encoder::EncoderConfig cfg;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.dim = 16;
  cfg.inner_dim = 32;
  cfg.stack_frames = 2;
  cfg.input_bins = 8;
  cfg.max_tokens = 8;
  return cfg;
}

dsp::MelSpec random_spec(Eigen::Index frames, Eigen::Index bins,
                         std::uint64_t seed) {
  Rng rng(seed);
  dsp::MelSpec spec;
  spec.values.resize(frames, bins);
  for (Eigen::Index r = 0; r < frames; ++r)
    for (Eigen::Index c = 0; c < bins; ++c)
      spec.values(r, c) = rng.uniform(0.0, 1.0);
  return spec;
}

void zero_block_params(encoder::EncoderState& state) {
  for (auto& blk : state.blocks)
    blk.visit("", [](const std::string&, nn::Param& p) { p.value.setZero(); });
}

}  // namespace

TEST_CASE("frame stacking shapes and truncation") {
  SUBCASE("8 frames stack to 2 tokens of 256 dims") {
    encoder::EncoderConfig cfg;
    cfg.input_bins = 64;
    Rng rng(1);
    const auto state = encoder::init_encoder(cfg, rng);
    const auto spec = random_spec(8, 64, 2);
    const Matrix stacked = encoder::frame_stack(spec.values, 4);
    CHECK(stacked.rows() == 2);
    CHECK(stacked.cols() == 256);
    const Matrix tokens = encoder::frame_stack_and_project(spec, state);
    CHECK(tokens.rows() == 2);
    CHECK(tokens.cols() == cfg.dim);
  }

  SUBCASE("598 frames truncate to 149 tokens") {
    const Matrix stacked =
        encoder::frame_stack(random_spec(598, 64, 3).values, 4);
    CHECK(stacked.rows() == 149);
  }

  SUBCASE("identity projection reproduces the stacked frames") {
    encoder::EncoderConfig cfg = tiny_config();
    cfg.dim = cfg.stack_frames * cfg.input_bins;  // 16
    cfg.n_heads = 2;
    cfg.inner_dim = 32;
    Rng rng(4);
    auto state = encoder::init_encoder(cfg, rng);
    state.patch_weight.value = Matrix::Identity(16, 16);
    state.patch_bias.value.setZero();
    const auto spec = random_spec(6, 8, 5);
    const Matrix tokens = encoder::frame_stack_and_project(spec, state);
    const Matrix stacked = encoder::frame_stack(spec.values, 2);
    CHECK((tokens - stacked).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("too-short input is rejected") {
    Rng rng(6);
    const auto state = encoder::init_encoder(tiny_config(), rng);
    const auto spec = random_spec(1, 8, 7);
    CHECK_THROWS_AS(encoder::frame_stack_and_project(spec, state), DataError);
  }
}

TEST_CASE("encode output contract") {
  Rng rng(8);
  const auto state = encoder::init_encoder(tiny_config(), rng);

  SUBCASE("shape is (T+1) x d") {
    const auto spec = random_spec(10, 8, 9);
    const auto seq = encoder::encode(spec, state);
    CHECK(seq.tokens.rows() == 6);  // floor(10/2) + CLS
    CHECK(seq.tokens.cols() == 16);
  }

  SUBCASE("deterministic, and different inputs differ") {
    const auto a = random_spec(10, 8, 10);
    const auto b = random_spec(10, 8, 11);
    const auto sa = encoder::encode(a, state);
    const auto sa2 = encoder::encode(a, state);
    const auto sb = encoder::encode(b, state);
    CHECK((sa.tokens - sa2.tokens).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sa.tokens - sb.tokens).cwiseAbs().maxCoeff() > 1e-8);
  }

  SUBCASE("sequence exceeding the positional table is rejected") {
    const auto spec = random_spec(20, 8, 12);  // 10 tokens > max 8
    CHECK_THROWS_AS(encoder::encode(spec, state), DataError);
  }

  SUBCASE("truncation rule: extra frames beyond a stack multiple are ignored") {
    const auto spec = random_spec(11, 8, 13);
    dsp::MelSpec trimmed;
    trimmed.values = spec.values.topRows(10);
    const auto a = encoder::encode(spec, state);
    const auto b = encoder::encode(trimmed, state);
    CHECK((a.tokens - b.tokens).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("positional prefix is shared across lengths") {
    // With zeroed blocks the output is input + positions, so equal frames
    // at different total lengths must agree on the shared prefix.
    auto state2 = encoder::init_encoder(tiny_config(), rng);
    zero_block_params(state2);
    const auto spec = random_spec(8, 8, 14);
    dsp::MelSpec shorter;
    shorter.values = spec.values.topRows(4);
    const auto a = encoder::encode(spec, state2);
    const auto b = encoder::encode(shorter, state2);
    // gemm kernels round differently across matrix heights; demand
    // agreement at the ulp scale rather than bitwise.
    CHECK((a.tokens.topRows(3) - b.tokens.topRows(3)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("residual passthrough with zeroed blocks") {
  Rng rng(15);
  auto state = encoder::init_encoder(tiny_config(), rng);
  zero_block_params(state);

  const auto spec = random_spec(8, 8, 16);
  const auto seq = encoder::encode(spec, state);

  const Matrix projected = encoder::frame_stack_and_project(spec, state);
  Matrix expected(projected.rows() + 1, projected.cols());
  expected.row(0) = state.cls_token.value.row(0);
  expected.bottomRows(projected.rows()) = projected;
  expected += state.pos_embedding.value.topRows(projected.rows() + 1);

  CHECK((seq.tokens - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("CLS attends to every position") {
  Rng rng(17);
  const auto state = encoder::init_encoder(tiny_config(), rng);
  const auto spec = random_spec(8, 8, 18);
  const auto base = encoder::encode(spec, state);

  for (Eigen::Index frame : {0L, 3L, 7L}) {
    dsp::MelSpec poked = spec;
    poked.values(frame, 2) += 0.37;
    const auto seq = encoder::encode(poked, state);
    CHECK((seq.tokens.row(0) - base.tokens.row(0)).cwiseAbs().maxCoeff() >
          1e-10);
  }
}

TEST_CASE("parameter counts") {
  SUBCASE("small preset lands within 10% of 22M") {
    auto cfg = encoder::EncoderConfig::small_preset();
    const auto count = encoder::param_count(cfg);
    CHECK(count >= 19'800'000);
    CHECK(count <= 24'200'000);
  }

  SUBCASE("base preset lands within 10% of 86M") {
    auto cfg = encoder::EncoderConfig::base_preset();
    const auto count = encoder::param_count(cfg);
    CHECK(count >= 77'400'000);
    CHECK(count <= 94'600'000);
  }

  SUBCASE("tiny config matches the hand-computed closed form") {
    encoder::EncoderConfig cfg;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.dim = 8;
    cfg.inner_dim = 16;
    cfg.input_bins = 4;
    cfg.stack_frames = 2;
    cfg.max_tokens = 8;
    // patch: 8*8 + 8 = 72; cls: 8; pos: 9*8 = 72;
    // block: ln1 16 + qkv 3*(64+8)=216 + out 72 + ln2 16
    //        + mlp_in 8*16+16=144 + mlp_out 16*8+8=136  -> 600
    CHECK(encoder::param_count(cfg) == 72 + 8 + 72 + 600);
  }

  SUBCASE("count equals the number of visited coefficients") {
    Rng rng(19);
    auto state = encoder::init_encoder(tiny_config(), rng);
    std::int64_t visited = 0;
    state.visit([&](const std::string&, nn::Param& p) {
      visited += static_cast<std::int64_t>(p.value.size());
    });
    CHECK(visited == encoder::param_count(tiny_config()));
  }
}

TEST_CASE("embedding extraction modes") {
  Rng rng(20);
  const auto cfg = tiny_config();
  const auto state = encoder::init_encoder(cfg, rng);
  const auto spec = random_spec(8, 8, 21);
  const auto seq = encoder::encode(spec, state, /*keep_per_block=*/true);

  SUBCASE("pretrain mode is the final CLS") {
    const auto emb =
        encoder::extract_embedding(seq, encoder::EmbeddingMode::pretrain);
    CHECK(emb.vector.size() == 16);
    CHECK((emb.vector.transpose() - seq.tokens.row(0)).cwiseAbs().maxCoeff() ==
          0.0);
  }

  SUBCASE("finetune mode is CLS + last-block average") {
    const auto emb =
        encoder::extract_embedding(seq, encoder::EmbeddingMode::finetune);
    CHECK(emb.vector.size() == 32);
    const Vector avg =
        seq.tokens.bottomRows(seq.tokens.rows() - 1).colwise().mean().transpose();
    CHECK((emb.vector.tail(16) - avg).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("linear_eval concatenates per-block averages") {
    const auto emb =
        encoder::extract_embedding(seq, encoder::EmbeddingMode::linear_eval);
    CHECK(emb.vector.size() == 16 * 3);  // cls + 2 blocks
    CHECK(encoder::embedding_dim(cfg, encoder::EmbeddingMode::linear_eval) ==
          48);
  }

  SUBCASE("joint_average pooling lands at 2d") {
    const auto emb = encoder::extract_embedding(
        seq, encoder::EmbeddingMode::linear_eval,
        encoder::LinearEvalPooling::joint_average);
    CHECK(emb.vector.size() == 32);
  }

  SUBCASE("small preset linear_eval dimension is 4992") {
    CHECK(encoder::embedding_dim(encoder::EncoderConfig::small_preset(),
                                 encoder::EmbeddingMode::linear_eval) == 4992);
    CHECK(encoder::embedding_dim(encoder::EncoderConfig::small_preset(),
                                 encoder::EmbeddingMode::finetune) == 768);
  }

  SUBCASE("missing per-block outputs are rejected") {
    const auto bare = encoder::encode(spec, state, false);
    CHECK_THROWS_AS(
        encoder::extract_embedding(bare, encoder::EmbeddingMode::linear_eval),
        ConfigError);
  }

  SUBCASE("constant non-CLS tokens average to themselves") {
    encoder::TokenSequence constant;
    constant.tokens.resize(5, 4);
    constant.tokens.row(0) << 9, 9, 9, 9;
    for (int r = 1; r < 5; ++r) constant.tokens.row(r) << 1, 2, 3, 4;
    const auto emb =
        encoder::extract_embedding(constant, encoder::EmbeddingMode::finetune);
    CHECK(emb.vector.tail(4)(0) == doctest::Approx(1.0));
    CHECK(emb.vector.tail(4)(3) == doctest::Approx(4.0));
  }
}

TEST_CASE("encoder analytic gradients match finite differences") {
  Rng rng(22);
  auto state = encoder::init_encoder(tiny_config(), rng);
  const auto spec = random_spec(8, 8, 23);

  // Scalar objective: weighted sum of all output entries.
  Rng wrng(24);
  encoder::EncodeCache cache;
  auto seq = encoder::encode(spec, state, false, &cache);
  Matrix weights(seq.tokens.rows(), seq.tokens.cols());
  for (Eigen::Index r = 0; r < weights.rows(); ++r)
    for (Eigen::Index c = 0; c < weights.cols(); ++c)
      weights(r, c) = wrng.uniform(-1.0, 1.0);

  auto objective = [&]() {
    return (encoder::encode(spec, state).tokens.array() * weights.array()).sum();
  };

  state.zero_grads();
  encoder::encode_backward(state, state, cache, weights);

  const double h = 1e-4;
  double max_rel = 0.0;
  state.visit([&](const std::string&, nn::Param& p) {
    // Probe a bounded number of coordinates per tensor to keep this fast.
    const Eigen::Index step = std::max<Eigen::Index>(1, p.value.size() / 5);
    for (Eigen::Index i = 0; i < p.value.size(); i += step) {
      double* coeff = p.value.data() + i;
      const double saved = *coeff;
      *coeff = saved + h;
      const double up = objective();
      *coeff = saved - h;
      const double down = objective();
      *coeff = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data()[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      max_rel = std::max(max_rel, rel);
    }
  });
  CHECK(max_rel < 1e-4);
}

// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"
#include "melssl/rng.hpp"

#include <string>

namespace melssl::nn {

/**
 * A learnable tensor with its gradient accumulator.
 * decay marks weight-decay eligibility (weight matrices only; biases,
 * normalization parameters and embeddings are excluded).
 */
struct Param {
  Matrix value;
  Matrix grad;
  bool decay = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

inline void init_trunc_normal(Param& p, Eigen::Index rows, Eigen::Index cols,
                              double stddev, Rng& rng, bool decay) {
  p.value.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      p.value(i, j) = rng.truncated_normal(stddev);
  p.decay = decay;
  p.zero_grad();
}

inline void init_const(Param& p, Eigen::Index rows, Eigen::Index cols,
                       double value) {
  p.value = Matrix::Constant(rows, cols, value);
  p.decay = false;
  p.zero_grad();
}

/** Y = X W + b (b broadcast over rows). */
inline Matrix linear_forward(const Matrix& x, const Param& w, const Param& b) {
  return (x * w.value).rowwise() + b.value.row(0);
}

/** Accumulates dW, db and returns dX. */
inline Matrix linear_backward(const Matrix& x, Param& w, Param& b,
                              const Matrix& d_out) {
  w.grad.noalias() += x.transpose() * d_out;
  b.grad.row(0) += d_out.colwise().sum();
  return d_out * w.value.transpose();
}

/** Row-wise layer normalization; caches per-row mean and 1/std. */
Matrix layernorm_forward(const Matrix& x, const Param& gamma,
                         const Param& beta, Vector& mean, Vector& rstd,
                         double eps = 1e-5);

/** Accumulates dgamma/dbeta and returns dX. */
Matrix layernorm_backward(const Matrix& x, const Param& gamma,
                          const Vector& mean, const Vector& rstd,
                          Param& gamma_p, Param& beta_p, const Matrix& d_out);

Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& d_out);

/** Numerically stable row-wise softmax. */
Matrix softmax_rows(const Matrix& x);

/** dS given A = softmax_rows(S) and dA. */
Matrix softmax_rows_backward(const Matrix& a, const Matrix& d_a);

}  // namespace melssl::nn

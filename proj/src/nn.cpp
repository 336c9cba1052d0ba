// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/nn.hpp"

#include <cmath>

namespace melssl::nn {

namespace {
using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Matrix layernorm_forward(const Matrix& x, const Param& gamma,
                         const Param& beta, Vector& mean, Vector& rstd,
                         double eps) {
  const Eigen::Index n = x.rows();
  mean.resize(n);
  rstd.resize(n);
  Matrix out(n, x.cols());
  const RowArray g = gamma.value.row(0).array();
  const RowArray b = beta.value.row(0).array();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + eps);
    mean(i) = mu;
    rstd(i) = r;
    out.row(i) = (((x.row(i).array() - mu) * r) * g + b).matrix();
  }
  return out;
}

Matrix layernorm_backward(const Matrix& x, const Param& gamma,
                          const Vector& mean, const Vector& rstd,
                          Param& gamma_p, Param& beta_p, const Matrix& d_out) {
  const Eigen::Index n = x.rows();
  Matrix dx(n, x.cols());
  const RowArray g = gamma.value.row(0).array();
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowArray x_hat = (x.row(i).array() - mean(i)) * rstd(i);
    const RowArray dy = d_out.row(i).array();
    gamma_p.grad.row(0).array() += dy * x_hat;
    beta_p.grad.row(0).array() += dy;
    const RowArray dx_hat = dy * g;
    const double m1 = dx_hat.mean();
    const double m2 = (dx_hat * x_hat).mean();
    dx.row(i) = (rstd(i) * (dx_hat - m1 - x_hat * m2)).matrix();
  }
  return dx;
}

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  });
}

Matrix gelu_backward(const Matrix& x, const Matrix& d_out) {
  const Matrix deriv = x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
  return deriv.cwiseProduct(d_out);
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const RowArray e = (x.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& a, const Matrix& d_a) {
  Matrix ds(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double dot = a.row(i).dot(d_a.row(i));
    ds.row(i) = (a.row(i).array() * (d_a.row(i).array() - dot)).matrix();
  }
  return ds;
}

}  // namespace melssl::nn

// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/ssl.hpp"

#include <cmath>
#include <vector>

namespace melssl::ssl {

void HeadConfig::validate() const {
  if (hidden_dim < 1 || out_dim < 1)
    throw ConfigError("head: hidden_dim and out_dim must be >= 1");
}

namespace {

// Fan-in-scaled uniform, the usual init for plain linear layers.
void init_linear(nn::Param& w, Eigen::Index in_dim, Eigen::Index out_dim,
                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  w.value.resize(in_dim, out_dim);
  for (Eigen::Index i = 0; i < in_dim; ++i)
    for (Eigen::Index j = 0; j < out_dim; ++j)
      w.value(i, j) = rng.uniform(-bound, bound);
  w.decay = true;
  w.zero_grad();
}

}  // namespace

HeadParams init_head(Eigen::Index in_dim, const HeadConfig& cfg, Rng& rng) {
  cfg.validate();
  HeadParams h;
  Rng init = rng.derive("head_init");
  init_linear(h.w1, in_dim, cfg.hidden_dim, init);
  nn::init_const(h.b1, 1, cfg.hidden_dim, 0.0);
  nn::init_const(h.bn_gamma, 1, cfg.hidden_dim, 1.0);
  nn::init_const(h.bn_beta, 1, cfg.hidden_dim, 0.0);
  init_linear(h.w2, cfg.hidden_dim, cfg.out_dim, init);
  nn::init_const(h.b2, 1, cfg.out_dim, 0.0);
  h.bn_running_mean = Matrix::Zero(1, cfg.hidden_dim);
  h.bn_running_var = Matrix::Ones(1, cfg.hidden_dim);
  return h;
}

Matrix head_forward(const Matrix& x, const HeadParams& params, bool train_mode,
                    HeadCache* cache) {
  if (x.cols() != params.in_dim())
    throw ConfigError("head_forward: input dim mismatch");
  if (x.rows() < 1) throw ConfigError("head_forward: empty batch");
  if (train_mode && x.rows() < 2)
    throw ConfigError("head_forward: batch norm needs batch size >= 2");

  const Matrix h_pre = nn::linear_forward(x, params.w1, params.b1);

  Matrix mean, var;
  if (train_mode) {
    mean = h_pre.colwise().mean();
    var = (h_pre.rowwise() - mean.row(0)).array().square().colwise().mean();
  } else {
    mean = params.bn_running_mean;
    var = params.bn_running_var;
  }
  const Matrix denom = (var.array() + params.bn_eps).sqrt();
  Matrix h_hat = h_pre;
  h_hat.array().rowwise() -= mean.row(0).array();
  h_hat.array().rowwise() /= denom.row(0).array();

  Matrix relu_in = h_hat;
  relu_in.array().rowwise() *= params.bn_gamma.value.row(0).array();
  relu_in.array().rowwise() += params.bn_beta.value.row(0).array();

  const Matrix relu_out = relu_in.cwiseMax(0.0);
  Matrix out = nn::linear_forward(relu_out, params.w2, params.b2);

  if (cache != nullptr) {
    cache->x_in = x;
    cache->h_pre = h_pre;
    cache->h_hat = h_hat;
    cache->relu_in = relu_in;
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->train_mode = train_mode;
  }
  return out;
}

Matrix head_backward(const HeadParams& params, HeadParams& grad_sink,
                     const HeadCache& cache, const Matrix& d_out) {
  const Matrix relu_out = cache.relu_in.cwiseMax(0.0);
  const Matrix d_relu_out =
      nn::linear_backward(relu_out, grad_sink.w2, grad_sink.b2, d_out);
  const Matrix d_relu_in =
      (cache.relu_in.array() > 0.0).cast<double>() * d_relu_out.array();

  grad_sink.bn_gamma.grad.row(0) +=
      (d_relu_in.array() * cache.h_hat.array()).colwise().sum().matrix();
  grad_sink.bn_beta.grad.row(0) += d_relu_in.colwise().sum();

  Matrix d_hhat = d_relu_in;
  d_hhat.array().rowwise() *= params.bn_gamma.value.row(0).array();

  const Eigen::ArrayXd denom =
      (cache.batch_var.row(0).array() + params.bn_eps).sqrt().transpose();
  Matrix d_hpre;
  if (cache.train_mode) {
    const Eigen::ArrayXd m1 = d_hhat.colwise().mean().row(0).array().transpose();
    const Eigen::ArrayXd m2 = (d_hhat.array() * cache.h_hat.array())
                                  .colwise()
                                  .mean()
                                  .row(0)
                                  .transpose();
    d_hpre = d_hhat;
    d_hpre.array().rowwise() -= m1.transpose();
    d_hpre.array() -= cache.h_hat.array().rowwise() * m2.transpose();
    d_hpre.array().rowwise() /= denom.transpose();
  } else {
    d_hpre = d_hhat;
    d_hpre.array().rowwise() /= denom.transpose();
  }

  return nn::linear_backward(cache.x_in, grad_sink.w1, grad_sink.b1, d_hpre);
}

void update_running_stats(HeadParams& params, const HeadCache& cache) {
  if (!cache.train_mode) return;
  const auto n = static_cast<double>(cache.h_pre.rows());
  const double mom = params.bn_momentum;
  const Matrix var_unbiased = cache.batch_var * (n / (n - 1.0));
  params.bn_running_mean =
      (1.0 - mom) * params.bn_running_mean + mom * cache.batch_mean;
  params.bn_running_var =
      (1.0 - mom) * params.bn_running_var + mom * var_unbiased;
}

StudentParams init_student(const encoder::EncoderConfig& enc_cfg,
                           const HeadConfig& head_cfg, Rng& rng) {
  StudentParams s;
  s.encoder = encoder::init_encoder(enc_cfg, rng);
  Rng proj_rng = rng.derive("projector");
  Rng pred_rng = rng.derive("predictor");
  s.projector = init_head(enc_cfg.dim, head_cfg, proj_rng);
  s.predictor = init_head(head_cfg.out_dim, head_cfg, pred_rng);
  return s;
}

TeacherParams init_teacher(const StudentParams& student) {
  TeacherParams t;
  t.encoder = student.encoder;
  t.projector = student.projector;
  t.encoder.zero_grads();
  t.projector.zero_grads();
  return t;
}

double normalized_mse(const Vector& p, const Vector& z) {
  if (p.size() != z.size())
    throw ConfigError("normalized_mse: dimension mismatch");
  const double pn = p.norm(), zn = z.norm();
  if (pn == 0.0 || zn == 0.0)
    throw NumericalError("normalized_mse: zero-norm input");
  return (p / pn - z / zn).squaredNorm();
}

Vector normalized_mse_grad(const Vector& p, const Vector& z) {
  const double pn = p.norm(), zn = z.norm();
  if (pn == 0.0 || zn == 0.0)
    throw NumericalError("normalized_mse: zero-norm input");
  const Vector u = p / pn;
  const Vector v = z / zn;
  return (-2.0 / pn) * (v - u.dot(v) * u);
}

namespace {

// Student rows r < B hold x_prime, rows r >= B hold x; the teacher sees the
// sibling view in the same row.
const Matrix& student_input(const std::vector<views::ViewPair>& pairs,
                            Eigen::Index r) {
  const auto b = static_cast<Eigen::Index>(pairs.size());
  return r < b ? pairs[static_cast<std::size_t>(r)].x_prime.values
               : pairs[static_cast<std::size_t>(r - b)].x.values;
}

const Matrix& teacher_input(const std::vector<views::ViewPair>& pairs,
                            Eigen::Index r) {
  const auto b = static_cast<Eigen::Index>(pairs.size());
  return r < b ? pairs[static_cast<std::size_t>(r)].x.values
               : pairs[static_cast<std::size_t>(r - b)].x_prime.values;
}

}  // namespace

PairBatchForward symmetric_loss_forward(
    const std::vector<views::ViewPair>& pairs, const StudentParams& student,
    const TeacherParams& teacher, bool train_mode, bool keep_caches,
    const SslOptions& opts) {
  if (pairs.empty()) throw ConfigError("symmetric_loss: empty batch");
  const auto b = static_cast<Eigen::Index>(pairs.size());
  const Eigen::Index rows = 2 * b;
  const int stack = student.encoder.cfg.stack_frames;

  // Validate shapes up front so the parallel loops cannot throw.
  for (const auto& pair : pairs) {
    if (pair.x.values.rows() != pair.x_prime.values.rows() ||
        pair.x.values.cols() != pair.x_prime.values.cols())
      throw ConfigError("symmetric_loss: view shapes differ within a pair");
    if (pair.x.values.rows() < stack)
      throw DataError("symmetric_loss: view shorter than stack_frames");
    if (pair.x.values.rows() / stack > student.encoder.cfg.max_tokens)
      throw DataError("symmetric_loss: view exceeds positional table");
    if (pair.x.values.cols() != student.encoder.cfg.input_bins)
      throw DataError("symmetric_loss: bin count mismatch");
  }

  PairBatchForward fwd;
  fwd.has_caches = keep_caches;
  fwd.student_h.resize(rows, student.encoder.cfg.dim);
  if (keep_caches)
    fwd.encoder_caches.resize(static_cast<std::size_t>(rows));

  Matrix teacher_h(rows, teacher.encoder.cfg.dim);

#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < rows; ++r) {
    dsp::MelSpec view;
    view.values = student_input(pairs, r);
    encoder::EncodeCache* cache =
        keep_caches ? &fwd.encoder_caches[static_cast<std::size_t>(r)] : nullptr;
    const auto seq = encoder::encode(view, student.encoder, false, cache);
    fwd.student_h.row(r) = seq.tokens.row(0);
  }

#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < rows; ++r) {
    dsp::MelSpec view;
    view.values = teacher_input(pairs, r);
    const auto seq = encoder::encode(view, teacher.encoder);
    teacher_h.row(r) = seq.tokens.row(0);
  }

  const bool teacher_train = opts.teacher_eval_mode ? false : train_mode;
  fwd.z = head_forward(teacher_h, teacher.projector, teacher_train);

  const Matrix z_student =
      head_forward(fwd.student_h, student.projector, train_mode,
                   keep_caches ? &fwd.proj_cache : nullptr);
  if (opts.use_predictor) {
    fwd.p = head_forward(z_student, student.predictor, train_mode,
                         keep_caches ? &fwd.pred_cache : nullptr);
  } else {
    fwd.p = z_student;
  }

  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r)
    total += normalized_mse(fwd.p.row(r).transpose(), fwd.z.row(r).transpose());
  fwd.loss = total / static_cast<double>(b);
  return fwd;
}

double symmetric_loss(const std::vector<views::ViewPair>& pairs,
                      const StudentParams& student,
                      const TeacherParams& teacher, bool train_mode,
                      const SslOptions& opts) {
  return symmetric_loss_forward(pairs, student, teacher, train_mode, false,
                                opts)
      .loss;
}

void symmetric_loss_backward(const StudentParams& student,
                             StudentParams& grad_sink,
                             const PairBatchForward& fwd,
                             const SslOptions& opts) {
  if (!fwd.has_caches)
    throw ConfigError("symmetric_loss_backward: forward kept no caches");
  const Eigen::Index rows = fwd.p.rows();
  const auto b = static_cast<double>(rows) / 2.0;

  Matrix d_p(rows, fwd.p.cols());
  for (Eigen::Index r = 0; r < rows; ++r)
    d_p.row(r) = normalized_mse_grad(fwd.p.row(r).transpose(),
                                     fwd.z.row(r).transpose())
                     .transpose() /
                 b;

  Matrix d_zs = opts.use_predictor
                    ? head_backward(student.predictor, grad_sink.predictor,
                                    fwd.pred_cache, d_p)
                    : d_p;
  const Matrix d_h =
      head_backward(student.projector, grad_sink.projector, fwd.proj_cache, d_zs);

  // Encoder backward: fixed chunking keeps gradient accumulation order
  // independent of the number of worker threads.
  const int n_chunks = static_cast<int>(std::min<Eigen::Index>(rows, 8));
  std::vector<encoder::EncoderState> chunk_grads(
      static_cast<std::size_t>(n_chunks));
  for (auto& g : chunk_grads) {
    g = student.encoder;
    g.zero_grads();
  }

#pragma omp parallel for schedule(static)
  for (int c = 0; c < n_chunks; ++c) {
    auto& sink = chunk_grads[static_cast<std::size_t>(c)];
    for (Eigen::Index r = c; r < rows; r += n_chunks) {
      const auto& cache = fwd.encoder_caches[static_cast<std::size_t>(r)];
      Matrix d_out = Matrix::Zero(cache.tokens + 1, fwd.student_h.cols());
      d_out.row(0) = d_h.row(r);
      encoder::encode_backward(student.encoder, sink, cache, d_out);
    }
  }

  for (auto& g : chunk_grads) {
    std::vector<Matrix*> dst, src;
    grad_sink.encoder.visit([&](const std::string&, nn::Param& p) {
      dst.push_back(&p.grad);
    });
    g.visit([&](const std::string&, nn::Param& p) { src.push_back(&p.grad); });
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
  }
}

void ema_update(TeacherParams& teacher, const StudentParams& student,
                double m) {
  if (m < 0.0 || m > 1.0) throw ConfigError("ema_update: m must be in [0, 1]");

  std::vector<std::pair<std::string, Matrix*>> t_params, s_params;
  teacher.visit([&](const std::string& name, nn::Param& p) {
    t_params.emplace_back(name, &p.value);
  });
  auto& mut_student = const_cast<StudentParams&>(student);
  mut_student.encoder.visit([&](const std::string& name, nn::Param& p) {
    s_params.emplace_back("encoder." + name, &p.value);
  });
  mut_student.projector.visit("projector.",
                              [&](const std::string& name, nn::Param& p) {
                                s_params.emplace_back(name, &p.value);
                              });

  teacher.visit_buffers([&](const std::string& name, Matrix& buf) {
    t_params.emplace_back(name, &buf);
  });
  mut_student.projector.visit_buffers(
      "projector.",
      [&](const std::string& name, Matrix& buf) {
        s_params.emplace_back(name, &buf);
      });

  if (t_params.size() != s_params.size())
    throw ConfigError("ema_update: parameter sets differ in size");
  for (std::size_t i = 0; i < t_params.size(); ++i) {
    auto& [t_name, t_mat] = t_params[i];
    auto& [s_name, s_mat] = s_params[i];
    if (t_name != s_name || t_mat->rows() != s_mat->rows() ||
        t_mat->cols() != s_mat->cols())
      throw ConfigError("ema_update: shape mismatch at " + t_name);
    *t_mat = m * (*t_mat) + (1.0 - m) * (*s_mat);
  }
}

}  // namespace melssl::ssl

// Copyright 2026 The sclmaps Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Autoencoder training of SCL and CAE action maps, the CAE auxiliary
// property losses, and multi-seed model selection.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sclmaps/dataset.hpp"
#include "sclmaps/maps.hpp"

namespace sclmaps {

struct AuxLossConfig {
  double w_prop = 0.0;
  double w_rev = 0.0;
  double w_con = 0.0;
  double alpha_lo = 0.1;  // proportionality scale range, subset of (0, 1]
  double alpha_hi = 1.0;
  double gamma = 2.0;     // consistency temperature
  double rev_dt = 1.0;    // step used inside the reversibility loss
  bool gaussian_actions = false;  // sample a ~ N(0, I) instead of using encoder outputs

  bool any() const { return w_prop > 0 || w_rev > 0 || w_con > 0; }

  void validate() const {
    if (w_prop < 0 || w_rev < 0 || w_con < 0) throw DataError("aux loss weights must be >= 0");
    if (!(alpha_lo > 0.0) || alpha_hi > 1.0 || alpha_lo > alpha_hi) {
      throw DataError("alpha range must lie in (0, 1]");
    }
    if (!(gamma > 0.0)) throw DataError("gamma must be positive");
    if (!(rev_dt > 0.0)) throw DataError("rev_dt must be positive");
  }
};

struct TrainConfig {
  int epochs = 1000;
  double lr = 1e-3;
  int batch_size = 256;
  int d = 2;
  std::vector<int> hidden{256, 256};
  unsigned long long seed = 0;
  bool orthonormalize = true;
  LipschitzSpec lipschitz{true, 1.0};
  int n_models = 1;
  AuxLossConfig aux;

  void validate() const {
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (n_models < 1) throw DataError("n_models must be >= 1");
    if (d < 1) throw DataError("latent dimension must be >= 1");
    if (!(lr > 0.0)) throw DataError("learning rate must be positive");
    for (int h : hidden) {
      if (h < 1) throw DataError("hidden widths must be positive");
    }
    lipschitz.validate();
    aux.validate();
  }
};

struct TrainReport {
  unsigned long long seed = 0;
  int epochs = 0;
  std::vector<double> train_rmse;
  std::vector<double> val_rmse;
  long clamp_count = 0;
  int best_epoch = -1;
  double best_val_rmse = std::numeric_limits<double>::infinity();
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainReport report)
      : NumericError(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

template <class Map>
struct Trained {
  Map map;
  TrainReport report;
  Mlp encoder;
};

// Per-step callback for invariant checks during training.
struct StepInfo {
  int epoch = 0;
  long step = 0;
  const Mlp* trunk_or_decoder = nullptr;
  double max_orthonormality_error = 0.0;  // SCL with Gram-Schmidt only
};
using StepHook = std::function<void(const StepInfo&)>;

// RMSE convention: sqrt(mean squared per-coordinate error), i.e. sqrt(loss / m)
// where loss is the batch mean of ||qdot - qdot_hat||^2.
inline double rmse_from_loss(double loss, int m) { return std::sqrt(loss / m); }

namespace detail {

inline Mat gather(const Mat& src, const std::vector<Eigen::Index>& cols, std::size_t begin,
                  std::size_t end) {
  Mat out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out.col(static_cast<Eigen::Index>(i - begin)) = src.col(cols[i]);
  return out;
}

inline Mat stack(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

struct SclBatch {
  double loss = 0.0;  // mean squared error sum over coordinates
  MlpGrads trunk;
  MlpGrads encoder;
  int clamps = 0;
  double max_ortho_error = 0.0;
};

inline SclBatch scl_batch(const Mlp& encoder, const Mlp& trunk, int m, int d, bool ortho,
                          const Mat& obs, const Mat& qdot, bool want_grads,
                          bool check_ortho = false) {
  const Eigen::Index B = obs.cols();
  SclBatch out;
  const MlpPass enc = mlp_forward(encoder, stack(obs, qdot));
  const MlpPass tr = mlp_forward(trunk, obs);
  Mat dA(d, B), dV(static_cast<Eigen::Index>(m) * d, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat H = reshape_v_to_H(tr.output.col(b), m, d);
    const Vec a = enc.output.col(b);
    std::optional<GramSchmidtTape> gs;
    if (ortho) {
      gs = gram_schmidt_forward(H);
      out.clamps += gs->clamp_count;
      if (check_ortho) {
        const double e = (gs->q.transpose() * gs->q - Mat::Identity(d, d)).cwiseAbs().maxCoeff();
        out.max_ortho_error = std::max(out.max_ortho_error, e);
      }
    }
    const Mat& Q = ortho ? gs->q : H;
    const Vec r = Q * a - qdot.col(b);
    out.loss += r.squaredNorm();
    if (want_grads) {
      const Vec dpred = 2.0 * r / static_cast<double>(B);
      dA.col(b) = Q.transpose() * dpred;
      const Mat dQ = dpred * a.transpose();
      dV.col(b) = vectorize(ortho ? gram_schmidt_backward(*gs, dQ) : dQ);
    }
  }
  out.loss /= static_cast<double>(B);
  if (want_grads) {
    out.trunk = mlp_backward(trunk, tr.tape, dV).params;
    out.encoder = mlp_backward(encoder, enc.tape, dA).params;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CAE auxiliary losses. Each returns the batch-mean loss and its gradient with
// respect to the decoder parameters; the actions are treated as constants.

struct AuxTerm {
  double value = 0.0;
  MlpGrads grads;
};

// mean_b (||g(o_b, alpha_b a_b)|| - alpha_b ||g(o_b, a_b)||)^2
inline AuxTerm proportionality_term(const Mlp& decoder, const Mat& obs, const Mat& actions,
                                    const Vec& alphas) {
  const Eigen::Index B = obs.cols();
  require_dims(actions.cols() == B && alphas.size() == B, "proportionality batch");
  Mat scaled = actions;
  for (Eigen::Index b = 0; b < B; ++b) scaled.col(b) *= alphas[b];
  const MlpPass p1 = mlp_forward(decoder, detail::stack(obs, scaled));
  const MlpPass p2 = mlp_forward(decoder, detail::stack(obs, actions));
  AuxTerm t;
  Mat g1 = Mat::Zero(p1.output.rows(), B), g2 = Mat::Zero(p2.output.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double n1 = p1.output.col(b).norm();
    const double n2 = p2.output.col(b).norm();
    const double e = n1 - alphas[b] * n2;
    t.value += e * e;
    const double c = 2.0 * e / static_cast<double>(B);
    if (n1 > 0.0) g1.col(b) = c * p1.output.col(b) / n1;
    if (n2 > 0.0) g2.col(b) = -c * alphas[b] * p2.output.col(b) / n2;
  }
  t.value /= static_cast<double>(B);
  t.grads = mlp_backward(decoder, p1.tape, g1).params;
  t.grads += mlp_backward(decoder, p2.tape, g2).params;
  return t;
}

// With q' = q + dt g(o(q), a): mean_b ||q' + dt g(o(q'), -a) - q||^2.
// The observation of q' is rebuilt from the context and the tuple's target.
inline AuxTerm reversibility_term(const Mlp& decoder, const MapContext& ctx, const Mat& q,
                                  const Mat& targets, const Mat& actions, double dt) {
  const Eigen::Index B = q.cols();
  require_dims(actions.cols() == B && targets.cols() == B, "reversibility batch");
  const int m = ctx.arm.dof();
  Mat obs0(ctx.obs.dim(m), B);
  for (Eigen::Index b = 0; b < B; ++b) obs0.col(b) = ctx.observe(q.col(b), targets.col(b));
  const MlpPass p1 = mlp_forward(decoder, detail::stack(obs0, actions));
  const Mat q1 = q + dt * p1.output;
  Mat obs1(obs0.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) obs1.col(b) = ctx.observe(q1.col(b), targets.col(b));
  const MlpPass p2 = mlp_forward(decoder, detail::stack(obs1, -actions));
  const Mat e = q1 + dt * p2.output - q;
  AuxTerm t;
  t.value = e.squaredNorm() / static_cast<double>(B);
  const Mat de = 2.0 * e / static_cast<double>(B);
  const MlpBackward b2 = mlp_backward(decoder, p2.tape, dt * de);
  Mat dq1 = de;
  for (Eigen::Index b = 0; b < B; ++b) {
    dq1.col(b) += ctx.obs.jacobian(ctx.arm, q1.col(b)).transpose() * b2.input.col(b).head(obs1.rows());
  }
  t.grads = b2.params;
  t.grads += mlp_backward(decoder, p1.tape, dt * dq1).params;
  return t;
}

// mean_b exp(-||q_i - q_j||^2 / gamma) ||g(o_i, a) - g(o_j, a)||^2, same action at both.
inline AuxTerm consistency_term(const Mlp& decoder, const Mat& obs_i, const Mat& obs_j,
                                const Mat& q_i, const Mat& q_j, const Mat& actions,
                                double gamma) {
  const Eigen::Index B = obs_i.cols();
  require_dims(obs_j.cols() == B && q_i.cols() == B && q_j.cols() == B && actions.cols() == B,
               "consistency batch");
  const MlpPass pi = mlp_forward(decoder, detail::stack(obs_i, actions));
  const MlpPass pj = mlp_forward(decoder, detail::stack(obs_j, actions));
  AuxTerm t;
  Mat gi(pi.output.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double w = std::exp(-(q_i.col(b) - q_j.col(b)).squaredNorm() / gamma);
    const Vec diff = pi.output.col(b) - pj.output.col(b);
    t.value += w * diff.squaredNorm();
    gi.col(b) = 2.0 * w * diff / static_cast<double>(B);
  }
  t.value /= static_cast<double>(B);
  t.grads = mlp_backward(decoder, pi.tape, gi).params;
  t.grads += mlp_backward(decoder, pj.tape, -gi).params;
  return t;
}

// Single-sample forms.
inline double loss_proportionality(const Mlp& decoder, const Vec& obs, const Vec& a, double alpha) {
  return proportionality_term(decoder, obs, a, Vec::Constant(1, alpha)).value;
}

inline double loss_reversibility(const Mlp& decoder, const MapContext& ctx, const JointState& q,
                                 const Eigen::Vector2d& target, const Vec& a, double dt) {
  return reversibility_term(decoder, ctx, q, target, a, dt).value;
}

inline double loss_consistency(const Mlp& decoder, const Vec& obs_i, const Vec& obs_j,
                               const JointState& q_i, const JointState& q_j, const Vec& a,
                               double gamma) {
  return consistency_term(decoder, obs_i, obs_j, q_i, q_j, a, gamma).value;
}

// ---------------------------------------------------------------------------
// Training loops

namespace detail {

inline void check_splits(const TupleSet& train, const TupleSet& val) {
  if (train.size() == 0) throw DataError("dataset has no training tuples");
  if (val.size() == 0) throw DataError("dataset has no validation tuples");
}

inline std::vector<Eigen::Index> index_range(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

inline void check_finite(double loss, int epoch, TrainReport& report) {
  if (!std::isfinite(loss)) {
    throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch),
                           report);
  }
}

}  // namespace detail

inline Trained<SclMap> train_scl(const Dataset& data, const TrainConfig& cfg,
                                 const StepHook& hook = {}) {
  cfg.validate();
  const TupleSet train = data.tuple_set(Split::train);
  const TupleSet val = data.tuple_set(Split::val);
  detail::check_splits(train, val);
  const int m = data.arm.dof();
  const int d = cfg.d;
  if (cfg.orthonormalize && d > m) throw DataError("Gram-Schmidt needs d <= m");
  const int n_obs = data.obs.dim(m);

  std::mt19937_64 rng(cfg.seed);
  Mlp encoder = make_mlp(n_obs + m, cfg.hidden, d, rng);
  Mlp trunk = make_mlp(n_obs, cfg.hidden, m * d, rng);
  LipschitzState lip_state;
  lipschitz_project(trunk, cfg.lipschitz, lip_state);
  AdamState enc_opt = AdamState::for_network(encoder, cfg.lr);
  AdamState trunk_opt = AdamState::for_network(trunk, cfg.lr);

  TrainReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  Mlp best_trunk = trunk, best_encoder = encoder;
  auto order = detail::index_range(train.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sq = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const Mat obs = detail::gather(train.obs, order, begin, end);
      const Mat qdot = detail::gather(train.qdot, order, begin, end);
      auto batch = detail::scl_batch(encoder, trunk, m, d, cfg.orthonormalize, obs, qdot, true,
                                     static_cast<bool>(hook));
      detail::check_finite(batch.loss, epoch, report);
      sq += batch.loss * static_cast<double>(end - begin);
      report.clamp_count += batch.clamps;
      adam_step(encoder, batch.encoder, enc_opt);
      adam_step(trunk, batch.trunk, trunk_opt);
      lipschitz_project(trunk, cfg.lipschitz, lip_state);
      if (hook) hook(StepInfo{epoch, step, &trunk, batch.max_ortho_error});
      ++step;
    }
    report.train_rmse.push_back(rmse_from_loss(sq / static_cast<double>(train.size()), m));
    const auto v = detail::scl_batch(encoder, trunk, m, d, cfg.orthonormalize, val.obs, val.qdot,
                                     false);
    detail::check_finite(v.loss, epoch, report);
    report.val_rmse.push_back(rmse_from_loss(v.loss, m));
    if (report.val_rmse.back() < report.best_val_rmse) {
      report.best_val_rmse = report.val_rmse.back();
      report.best_epoch = epoch;
      best_trunk = trunk;
      best_encoder = encoder;
    }
  }

  Trained<SclMap> out;
  out.map.ctx = MapContext{data.arm, data.obs};
  out.map.trunk = std::move(best_trunk);
  out.map.m = m;
  out.map.d = d;
  out.map.orthonormalize = cfg.orthonormalize;
  out.map.lipschitz = cfg.lipschitz;
  out.report = std::move(report);
  out.encoder = std::move(best_encoder);
  return out;
}

namespace detail {

struct CaeBatch {
  double mse = 0.0;
  double total = 0.0;
  MlpGrads decoder;
  MlpGrads encoder;
};

inline CaeBatch cae_batch(const Mlp& encoder, const Mlp& decoder, const MapContext& ctx,
                          const AuxLossConfig& aux, const Mat& obs, const Mat& q, const Mat& qdot,
                          const Mat& targets, bool want_grads, std::mt19937_64* rng) {
  const Eigen::Index B = obs.cols();
  const int d = encoder.output_dim();
  CaeBatch out;
  const MlpPass enc = mlp_forward(encoder, stack(obs, qdot));
  const MlpPass dec = mlp_forward(decoder, stack(obs, enc.output));
  const Mat r = dec.output - qdot;
  out.mse = r.squaredNorm() / static_cast<double>(B);
  out.total = out.mse;
  if (!want_grads) return out;
  const MlpBackward db = mlp_backward(decoder, dec.tape, 2.0 * r / static_cast<double>(B));
  out.decoder = db.params;
  out.encoder = mlp_backward(encoder, enc.tape, db.input.bottomRows(d)).params;
  if (!aux.any()) return out;

  Mat actions = enc.output;
  if (aux.gaussian_actions) {
    std::normal_distribution<double> gauss;
    for (Eigen::Index c = 0; c < actions.cols(); ++c) {
      for (Eigen::Index k = 0; k < d; ++k) actions(k, c) = gauss(*rng);
    }
  }
  if (aux.w_prop > 0) {
    std::uniform_real_distribution<double> ua(aux.alpha_lo, aux.alpha_hi);
    Vec alphas(B);
    for (auto& x : alphas) x = ua(*rng);
    AuxTerm t = proportionality_term(decoder, obs, actions, alphas);
    out.total += aux.w_prop * t.value;
    t.grads *= aux.w_prop;
    out.decoder += t.grads;
  }
  if (aux.w_rev > 0) {
    AuxTerm t = reversibility_term(decoder, ctx, q, targets, actions, aux.rev_dt);
    out.total += aux.w_rev * t.value;
    t.grads *= aux.w_rev;
    out.decoder += t.grads;
  }
  if (aux.w_con > 0) {
    std::vector<Eigen::Index> perm = index_range(B);
    std::shuffle(perm.begin(), perm.end(), *rng);
    AuxTerm t = consistency_term(decoder, obs, gather(obs, perm, 0, perm.size()), q,
                                 gather(q, perm, 0, perm.size()), actions, aux.gamma);
    out.total += aux.w_con * t.value;
    t.grads *= aux.w_con;
    out.decoder += t.grads;
  }
  return out;
}

}  // namespace detail

inline Trained<CaeMap> train_cae(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const TupleSet train = data.tuple_set(Split::train);
  const TupleSet val = data.tuple_set(Split::val);
  detail::check_splits(train, val);
  const int m = data.arm.dof();
  const int d = cfg.d;
  const int n_obs = data.obs.dim(m);
  const MapContext ctx{data.arm, data.obs};

  std::mt19937_64 rng(cfg.seed);
  Mlp encoder = make_mlp(n_obs + m, cfg.hidden, d, rng);
  Mlp decoder = make_mlp(n_obs + d, cfg.hidden, m, rng);
  AdamState enc_opt = AdamState::for_network(encoder, cfg.lr);
  AdamState dec_opt = AdamState::for_network(decoder, cfg.lr);

  TrainReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  Mlp best_decoder = decoder, best_encoder = encoder;
  auto order = detail::index_range(train.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sq = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      auto batch = detail::cae_batch(encoder, decoder, ctx, cfg.aux,
                                     detail::gather(train.obs, order, begin, end),
                                     detail::gather(train.q, order, begin, end),
                                     detail::gather(train.qdot, order, begin, end),
                                     detail::gather(train.target, order, begin, end), true, &rng);
      detail::check_finite(batch.total, epoch, report);
      sq += batch.mse * static_cast<double>(end - begin);
      adam_step(encoder, batch.encoder, enc_opt);
      adam_step(decoder, batch.decoder, dec_opt);
    }
    report.train_rmse.push_back(rmse_from_loss(sq / static_cast<double>(train.size()), m));
    const auto v = detail::cae_batch(encoder, decoder, ctx, cfg.aux, val.obs, val.q, val.qdot,
                                     val.target, false, nullptr);
    detail::check_finite(v.mse, epoch, report);
    report.val_rmse.push_back(rmse_from_loss(v.mse, m));
    if (report.val_rmse.back() < report.best_val_rmse) {
      report.best_val_rmse = report.val_rmse.back();
      report.best_epoch = epoch;
      best_decoder = decoder;
      best_encoder = encoder;
    }
  }

  Trained<CaeMap> out;
  out.map.ctx = ctx;
  out.map.decoder = std::move(best_decoder);
  out.map.m = m;
  out.map.d = d;
  out.report = std::move(report);
  out.encoder = std::move(best_encoder);
  return out;
}

// Index of the model with the lowest best-epoch validation RMSE; ties go to
// the lower seed.
inline std::size_t select_best(const std::vector<TrainReport>& reports) {
  if (reports.empty()) throw DataError("select_best needs at least one model");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto& a = reports[i];
    const auto& b = reports[best];
    if (a.best_val_rmse < b.best_val_rmse ||
        (a.best_val_rmse == b.best_val_rmse && a.seed < b.seed)) {
      best = i;
    }
  }
  return best;
}

template <class Map>
std::size_t select_best(const std::vector<Trained<Map>>& models) {
  std::vector<TrainReport> reports;
  for (const auto& m : models) reports.push_back(m.report);
  return select_best(reports);
}

}  // namespace sclmaps

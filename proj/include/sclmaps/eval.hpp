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

// Property experiments and the simulated reaching study: Lipschitz pair
// checks, one-shot and iterative reversal, proportionality sweeps, the greedy
// sampling user, and the training/evaluation grid.

#include <cmath>
#include <concepts>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sclmaps/records.hpp"
#include "sclmaps/training.hpp"

namespace sclmaps {

// Anything the harness can drive: decode a batch of actions at an observation,
// report its latent width and how to observe the arm.
template <class M>
concept DecodableMap = requires(const M& m, const Vec& o, const Mat& A) {
  { decode_batch(m, o, A) } -> std::convertible_to<Mat>;
  { latent_dim(m) } -> std::convertible_to<int>;
  { context(m) } -> std::convertible_to<const MapContext&>;
};

// A joint configuration together with the task target used to observe it.
struct TaskState {
  JointState q;
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
};

inline std::vector<TaskState> task_states(const Dataset& data, Split split) {
  std::vector<TaskState> out;
  for (const auto& t : data.tuples(split)) out.push_back({t.q, t.target});
  return out;
}

// ---------------------------------------------------------------------------
// Lipschitz checks

// The vectorized basis v(o): raw trunk output, or vec(GS(H)) when post_gs.
inline Vec basis_vector(const SclMap& map, const Vec& obs, bool post_gs) {
  if (!post_gs) return scl_vector(map, obs);
  return vectorize(gram_schmidt(scl_raw_basis(map, obs)));
}

inline bool check_lipschitz_pair(const SclMap& map, const Vec& obs_a, const Vec& obs_b, double L,
                                 bool post_gs = false) {
  const double dv = (basis_vector(map, obs_a, post_gs) - basis_vector(map, obs_b, post_gs)).norm();
  return dv <= L * (obs_a - obs_b).norm() + 1e-9;
}

struct LipschitzCheckResult {
  double percentage = 0.0;
  SummaryStats ratio;  // ||dv|| / ||do|| over pairs with distinct observations
  long n_pairs = 0;
};

inline LipschitzCheckResult run_lipschitz_check(const SclMap& map, const Mat& obs, double L,
                                                long n_pairs, unsigned long long seed,
                                                bool use_post_gs) {
  if (obs.cols() == 0) throw DataError("Lipschitz check needs states");
  if (n_pairs < 1) throw DataError("Lipschitz check needs at least one pair");
  Mat V = mlp_output(map.trunk, obs);
  if (use_post_gs) {
    for (Eigen::Index c = 0; c < V.cols(); ++c) {
      V.col(c) = vectorize(gram_schmidt(reshape_v_to_H(V.col(c), map.m, map.d)));
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, obs.cols() - 1);
  long held = 0;
  std::vector<double> ratios;
  for (long k = 0; k < n_pairs; ++k) {
    const Eigen::Index i = pick(rng);
    Eigen::Index j = pick(rng);
    while (obs.cols() > 1 && j == i) j = pick(rng);
    const double dv = (V.col(i) - V.col(j)).norm();
    const double dobs = (obs.col(i) - obs.col(j)).norm();
    if (dv <= L * dobs + 1e-9) ++held;
    if (dobs > 0.0) ratios.push_back(dv / dobs);
  }
  LipschitzCheckResult r;
  r.n_pairs = n_pairs;
  r.percentage = 100.0 * static_cast<double>(held) / static_cast<double>(n_pairs);
  if (!ratios.empty()) r.ratio = summarize(ratios);
  return r;
}

// ---------------------------------------------------------------------------
// Soft reversibility

namespace detail {

// alpha * (cos t, sin t) for d = 2, alpha * z / ||z|| with z ~ N(0, I) otherwise.
inline Vec action_with_norm(int d, double alpha, std::mt19937_64& rng) {
  if (d < 1) throw DataError("latent dimension must be at least 1");
  if (d == 2) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double t = angle(rng);
    return Eigen::Vector2d(alpha * std::cos(t), alpha * std::sin(t));
  }
  std::normal_distribution<double> gauss;
  Vec z(d);
  do {
    for (auto& x : z) x = gauss(rng);
  } while (!(z.norm() > 0.0));
  return alpha * z / z.norm();
}

}  // namespace detail

// Forward action then its negation from each state. Columns:
//   alpha, state, trial, e_fwd, e_rev, reversed, pair_lipschitz, qualifies
// For SCL maps, pair_lipschitz tests ||v(o_i) - v(o_j)|| <= L ||q_i - q_j|| on the
// basis actually applied (post-GS when the map orthonormalizes) and qualifies
// adds L * dt * ||a|| < 1; both are NaN for other map kinds.
inline RecordTable run_soft_reversibility(const ActionMap& map, const std::vector<TaskState>& states,
                                          const std::vector<double>& alphas, int n_per_state,
                                          double dt, unsigned long long seed,
                                          std::optional<double> lipschitz_L = std::nullopt) {
  RecordTable rec;
  rec.experiment = "reversibility";
  rec.map_kind = map_kind(map);
  rec.seed = seed;
  rec.dt = dt;
  rec.columns = {"alpha", "state", "trial", "e_fwd", "e_rev", "reversed", "pair_lipschitz",
                 "qualifies"};
  rec.config = Json{{"alphas", alphas}, {"n_per_state", n_per_state}, {"n_states", states.size()}};
  const auto* scl = std::get_if<SclMap>(&map);
  double L = lipschitz_L.value_or(scl && scl->lipschitz.enabled ? scl->lipschitz.L : 1.0);
  const MapContext& ctx = context(map);
  const int d = latent_dim(map);
  long trial = 0;
  for (double alpha : alphas) {
    for (std::size_t s = 0; s < states.size(); ++s) {
      for (int k = 0; k < n_per_state; ++k, ++trial) {
        std::mt19937_64 rng(seed + static_cast<unsigned long long>(trial));
        const Vec a = detail::action_with_norm(d, alpha, rng);
        const JointState& q0 = states[s].q;
        const Eigen::Vector2d& target = states[s].target;
        const Vec o0 = ctx.observe(q0, target);
        const JointState q_fwd = transition(map, q0, o0, a, dt);
        const Vec o1 = ctx.observe(q_fwd, target);
        const JointState q_rev = transition(map, q_fwd, o1, Vec(-a), dt);
        const double e_fwd = (q_fwd - q0).norm();
        const double e_rev = (q_rev - q0).norm();
        double pair = kDidNotConverge, qualifies = kDidNotConverge;
        if (scl) {
          const bool post = scl->orthonormalize;
          const double dv = (basis_vector(*scl, o0, post) - basis_vector(*scl, o1, post)).norm();
          const bool ok = dv <= L * e_fwd + 1e-9;
          pair = ok ? 1.0 : 0.0;
          qualifies = (ok && L * dt * a.norm() < 1.0 && e_fwd > 0.0) ? 1.0 : 0.0;
        }
        rec.add_row({alpha, static_cast<double>(s), static_cast<double>(k), e_fwd, e_rev,
                     e_rev < e_fwd ? 1.0 : 0.0, pair, qualifies});
      }
    }
  }
  return rec;
}

struct IterativeReversal {
  double e0 = 0.0;
  double eT = 0.0;
  int steps = 0;
  bool converged = false;
};

// s' = s0 + H(s0) z with ||z|| = alpha, then repeated least-squares corrections
// z' = H(s')^+ (s0 - s') until ||s' - s0|| < eps or max_iter.
inline IterativeReversal run_iterative_reversibility(const ActionMap& map, const TaskState& start,
                                                     double alpha, double eps, int max_iter,
                                                     unsigned long long seed) {
  const MapContext& ctx = context(map);
  auto basis_at = [&](const JointState& q) {
    auto H = linear_basis(map, ctx.observe(q, start.target));
    if (!H) throw DataError("iterative reversal needs a map that is linear in the action");
    return *H;
  };
  const JointState& s0 = start.q;
  const Mat H0 = basis_at(s0);
  if (H0.cols() < 1) throw DataError("iterative reversal needs a latent dimension of at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vec z(H0.cols());
  do {
    for (auto& x : z) x = gauss(rng);
  } while (!(z.norm() > 0.0));
  z *= alpha / z.norm();
  JointState s = s0 + H0 * z;
  IterativeReversal out;
  out.e0 = (s - s0).norm();
  while ((s - s0).norm() >= eps && out.steps < max_iter) {
    const Mat H = basis_at(s);
    s += H * pinv_action(H, s0 - s);
    ++out.steps;
  }
  out.eT = (s - s0).norm();
  out.converged = out.eT < eps;
  return out;
}

// ---------------------------------------------------------------------------
// Greedy sampling user

struct GreedyChoice {
  Vec action;
  JointState next;
  double objective = 0.0;
};

// Samples are drawn column by column from `rng`, so a larger n_samples draw
// from the same stream is a superset of a smaller one.
inline Mat gaussian_actions(int d, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Mat A(d, n);
  for (int c = 0; c < n; ++c) {
    for (int k = 0; k < d; ++k) A(k, c) = gauss(rng);
  }
  return A;
}

// Among the candidate columns of `actions`, the one whose step lands closest to
// q_target: argmin ||q_target - (q + dt g(o, a))||, first occurrence on ties.
template <DecodableMap Map>
GreedyChoice greedy_from_candidates(const Map& map, const Vec& obs, const JointState& q,
                                    const JointState& q_target, const Mat& actions, double dt) {
  if (actions.cols() < 1) throw DataError("greedy user needs at least one sample");
  const Mat qdot = decode_batch(map, obs, actions);
  require_dims(qdot.rows() == q.size(), "decoded velocity vs q");
  const Mat next = (dt * qdot).colwise() + q;
  const Vec objective = (next.colwise() - q_target).colwise().norm().transpose();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < objective.size(); ++i) {
    if (objective[i] < objective[best]) best = i;
  }
  return GreedyChoice{actions.col(best), next.col(best), objective[best]};
}

template <DecodableMap Map>
GreedyChoice greedy_action(const Map& map, const Vec& obs, const JointState& q,
                           const JointState& q_target, int n_samples, std::mt19937_64& rng,
                           double dt) {
  if (n_samples < 1) throw DataError("greedy user needs at least one sample");
  return greedy_from_candidates(map, obs, q, q_target, gaussian_actions(latent_dim(map), n_samples, rng),
                                dt);
}

template <DecodableMap Map>
GreedyChoice greedy_action(const Map& map, const Vec& obs, const JointState& q,
                           const JointState& q_target, int n_samples, unsigned long long seed,
                           double dt) {
  std::mt19937_64 rng(seed);
  return greedy_action(map, obs, q, q_target, n_samples, rng, dt);
}

struct ReachParams {
  int horizon = 200;
  double dt = 0.05;
  double tol = 0.05;  // joint-space success radius (rad)
  int n_samples = 4096;
  unsigned long long seed = 0;
};

struct GreedyRollout {
  JointState q;
  int steps = 0;
};

template <DecodableMap Map>
GreedyRollout greedy_rollout(const Map& map, JointState q, const JointState& goal,
                             const Eigen::Vector2d& target, const ReachParams& p,
                             std::mt19937_64& rng) {
  const MapContext& ctx = context(map);
  GreedyRollout r;
  while (r.steps < p.horizon && (q - goal).norm() >= p.tol) {
    const Vec obs = ctx.observe(q, target);
    q = greedy_action(map, obs, q, goal, p.n_samples, rng, p.dt).next;
    ++r.steps;
  }
  r.q = std::move(q);
  return r;
}

// Phase 1 drives from each test trajectory's first state to its last; phase 2
// drives back to the first. Columns:
//   trajectory, initial_error, end_error, end_steps, return_error, return_steps
template <DecodableMap Map>
RecordTable run_reaching_eval(const Map& map, const std::vector<const Trajectory*>& tests,
                              const ReachParams& p) {
  RecordTable rec;
  rec.experiment = "reach";
  rec.seed = p.seed;
  rec.dt = p.dt;
  rec.columns = {"trajectory", "initial_error", "end_error", "end_steps", "return_error",
                 "return_steps"};
  rec.config = Json{{"horizon", p.horizon}, {"tol", p.tol}, {"n_samples", p.n_samples},
                    {"n_trajectories", tests.size()}};
  for (std::size_t k = 0; k < tests.size(); ++k) {
    const Trajectory& traj = *tests[k];
    std::mt19937_64 rng(p.seed + k);
    const JointState& q0 = traj.q.front();
    const JointState& goal = traj.q.back();
    const auto out = greedy_rollout(map, q0, goal, traj.target, p, rng);
    const auto back = greedy_rollout(map, out.q, q0, traj.target, p, rng);
    rec.add_row({static_cast<double>(traj.id), (q0 - goal).norm(), (out.q - goal).norm(),
                 static_cast<double>(out.steps), (back.q - q0).norm(),
                 static_cast<double>(back.steps)});
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Proportionality

// r = ||P(T(q, alpha a)) - P(q)|| / (alpha ||P(T(q, a)) - P(q)||) with P the
// end-effector position, and the joint-space analogue r_q. Trials with a zero
// denominator are kept with NaN ratios and skipped = 1. Columns:
//   alpha, state, dir, r_ee, r_q, skipped
inline RecordTable run_proportionality_eval(const ActionMap& map, const std::vector<TaskState>& states,
                                            const std::vector<double>& alphas, int n_dirs,
                                            double action_norm, double dt,
                                            unsigned long long seed) {
  RecordTable rec;
  rec.experiment = "proportionality";
  rec.map_kind = map_kind(map);
  rec.seed = seed;
  rec.dt = dt;
  rec.columns = {"alpha", "state", "dir", "r_ee", "r_q", "skipped"};
  rec.config = Json{{"alphas", alphas}, {"n_dirs", n_dirs}, {"action_norm", action_norm}};
  const MapContext& ctx = context(map);
  const int d = latent_dim(map);
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw DataError("proportionality needs alpha > 0");
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    const JointState& q = states[s].q;
    const Vec obs = ctx.observe(q, states[s].target);
    const Eigen::Vector2d p0 = forward_kinematics(ctx.arm, q).position();
    for (int k = 0; k < n_dirs; ++k) {
      std::mt19937_64 rng(seed + s * static_cast<unsigned long long>(n_dirs) + k);
      const Vec a = detail::action_with_norm(d, action_norm, rng);
      const JointState q1 = transition(map, q, obs, a, dt);
      const double ee1 = (forward_kinematics(ctx.arm, q1).position() - p0).norm();
      const double j1 = (q1 - q).norm();
      for (double alpha : alphas) {
        const JointState qa = transition(map, q, obs, Vec(alpha * a), dt);
        const double eea = (forward_kinematics(ctx.arm, qa).position() - p0).norm();
        const double ja = (qa - q).norm();
        const bool skip = !(ee1 > 0.0) || !(j1 > 0.0);
        rec.add_row({alpha, static_cast<double>(s), static_cast<double>(k),
                     skip ? kDidNotConverge : eea / (alpha * ee1),
                     skip ? kDidNotConverge : ja / (alpha * j1), skip ? 1.0 : 0.0});
      }
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Grid runner

struct GridCell {
  std::string kind = "scl";  // scl | cae
  AuxLossConfig aux;
  bool orthonormalize = true;
  bool lipschitz = true;

  std::string label() const {
    if (kind == "scl") {
      return std::string("scl") + (orthonormalize ? "+gs" : "") + (lipschitz ? "+lip" : "");
    }
    std::string s = "cae";
    if (aux.w_prop > 0) s += "+prop[" + std::to_string(aux.alpha_lo).substr(0, 4) + "," +
                             std::to_string(aux.alpha_hi).substr(0, 4) + "]";
    if (aux.w_rev > 0) s += "+rev";
    if (aux.w_con > 0) s += "+con";
    return s;
  }
};

struct GridRow {
  GridCell cell;
  bool failed = false;
  std::string failure;
  std::vector<TrainReport> reports;
  RecordTable records;  // all seeds, with an extra leading "model" column
  SummaryStats end_error;
  SummaryStats return_error;
};

inline GridRow run_grid_cell(const Dataset& train_data, const std::vector<const Trajectory*>& tests,
                             TrainConfig base, const GridCell& cell, const ReachParams& reach) {
  GridRow row;
  row.cell = cell;
  base.aux = cell.aux;
  base.orthonormalize = cell.orthonormalize;
  base.lipschitz.enabled = cell.lipschitz;
  row.records.experiment = "grid";
  row.records.map_kind = cell.kind;
  row.records.seed = base.seed;
  row.records.dt = reach.dt;
  row.records.config = Json{{"cell", cell.label()}, {"n_models", base.n_models}};
  try {
    for (int i = 0; i < base.n_models; ++i) {
      TrainConfig cfg = base;
      cfg.seed = base.seed + static_cast<unsigned long long>(i);
      ActionMap map;
      if (cell.kind == "scl") {
        auto t = train_scl(train_data, cfg);
        row.reports.push_back(t.report);
        map = std::move(t.map);
      } else if (cell.kind == "cae") {
        auto t = train_cae(train_data, cfg);
        row.reports.push_back(t.report);
        map = std::move(t.map);
      } else {
        throw DataError("grid cells train scl or cae maps, not '" + cell.kind + "'");
      }
      ReachParams rp = reach;
      rp.seed = reach.seed + 1000003ULL * static_cast<unsigned long long>(i);
      RecordTable r = run_reaching_eval(map, tests, rp);
      if (row.records.columns.empty()) {
        row.records.columns = {"model"};
        row.records.columns.insert(row.records.columns.end(), r.columns.begin(), r.columns.end());
      }
      for (auto& rr : r.rows) {
        rr.insert(rr.begin(), static_cast<double>(i));
        row.records.rows.push_back(std::move(rr));
      }
    }
    row.end_error = summarize(row.records.column("end_error"));
    row.return_error = summarize(row.records.column("return_error"));
  } catch (const std::exception& e) {
    row.failed = true;
    row.failure = e.what();
  }
  return row;
}

inline std::vector<GridRow> run_grid(const Dataset& train_data,
                                     const std::vector<const Trajectory*>& tests,
                                     const TrainConfig& base, const std::vector<GridCell>& cells,
                                     const ReachParams& reach) {
  if (cells.empty()) throw DataError("empty grid");
  std::vector<GridRow> rows;
  for (const auto& cell : cells) rows.push_back(run_grid_cell(train_data, tests, base, cell, reach));
  return rows;
}

}  // namespace sclmaps

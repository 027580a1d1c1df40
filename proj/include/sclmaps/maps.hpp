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

// Action maps g(o, a) -> qdot: state-conditioned linear (SCL), conditional
// autoencoder decoder (CAE), PCA, and a planar mode-switching baseline.

#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sclmaps/nn.hpp"
#include "sclmaps/obs.hpp"

namespace sclmaps {

using LatentAction = Vec;

// Arm geometry and observation layout every map needs to rebuild o_r from q.
struct MapContext {
  ArmModel arm = ArmModel::planar_default();
  ObsSpec obs;

  Vec observe(const JointState& q, const Eigen::Vector2d& target) const {
    return obs.build(arm, q, target);
  }
};

// v (m*d) -> H (m x d), column j = v[j*m .. (j+1)*m).
inline Mat reshape_v_to_H(const Vec& v, int m, int d) {
  require_dims(v.size() == static_cast<Eigen::Index>(m) * d,
               "basis vector has " + std::to_string(v.size()) + " entries, expected m*d = " +
                   std::to_string(m * d));
  return Eigen::Map<const Mat>(v.data(), m, d);
}

inline Vec vectorize(const Mat& H) { return Eigen::Map<const Vec>(H.data(), H.size()); }

struct SclMap {
  MapContext ctx;
  Mlp trunk;  // obs -> v, length m*d
  int m = 0;
  int d = 0;
  bool orthonormalize = true;
  LipschitzSpec lipschitz;
};

struct CaeMap {
  MapContext ctx;
  Mlp decoder;  // (obs ++ a) -> qdot
  int m = 0;
  int d = 0;
};

struct PcaMap {
  MapContext ctx;
  Mat sigma;  // m x d, orthonormal columns
  Vec mean;   // diagnostic only; never added at decode time
};

enum class ControlMode { xy, orient };

inline std::string to_string(ControlMode mode) { return mode == ControlMode::xy ? "xy" : "orient"; }

inline ControlMode control_mode_from_string(const std::string& s) {
  if (s == "xy") return ControlMode::xy;
  if (s == "orient") return ControlMode::orient;
  throw DataError("unknown control mode '" + s + "'");
}

struct ModeSwitchMap {
  MapContext ctx;
  ControlMode mode = ControlMode::xy;
  double xy_gain = 0.5;      // m/s per unit input
  double orient_gain = 1.0;  // rad/s per unit input
  double damping = 0.01;
};

using ActionMap = std::variant<SclMap, CaeMap, PcaMap, ModeSwitchMap>;

inline std::string map_kind(const ActionMap& map) {
  static constexpr const char* names[] = {"scl", "cae", "pca", "mode_switch"};
  return names[map.index()];
}

inline const MapContext& context(const ActionMap& map) {
  return std::visit([](const auto& m) -> const MapContext& { return m.ctx; }, map);
}

// Concrete map types bind directly, so no temporary variant is created.
template <class M>
  requires(!std::is_same_v<M, ActionMap>) && requires(const M& m) { m.ctx; }
const MapContext& context(const M& map) {
  return map.ctx;
}

inline int joint_dim(const ActionMap& map) { return context(map).arm.dof(); }

inline int latent_dim(const ActionMap& map) {
  return std::visit(
      [](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PcaMap>) {
          return static_cast<int>(m.sigma.cols());
        } else if constexpr (std::is_same_v<T, ModeSwitchMap>) {
          return 2;
        } else {
          return m.d;
        }
      },
      map);
}

// ---------------------------------------------------------------------------
// SCL

// Trunk output before any orthonormalization.
inline Vec scl_vector(const SclMap& map, const Vec& obs) {
  require_dims(obs.size() == map.trunk.input_dim(), "observation width for SCL trunk");
  return mlp_output(map.trunk, obs);
}

inline Mat scl_raw_basis(const SclMap& map, const Vec& obs) {
  return reshape_v_to_H(scl_vector(map, obs), map.m, map.d);
}

inline Mat scl_basis(const SclMap& map, const Vec& obs) {
  Mat H = scl_raw_basis(map, obs);
  return map.orthonormalize ? gram_schmidt(H) : H;
}

// ---------------------------------------------------------------------------
// Mode switching

inline JointVelocity mode_switch_decode(const ModeSwitchMap& map, const JointState& q,
                                        const LatentAction& a) {
  require_dims(a.size() == 2, "mode switching takes a 2-D action");
  const ArmModel& arm = map.ctx.arm;
  check_state(arm, q);
  if (a.isZero(0.0)) return JointVelocity::Zero(arm.dof());
  if (map.mode == ControlMode::xy) {
    return damped_pinv_apply(position_jacobian(arm, q), map.xy_gain * a, map.damping);
  }
  // Hold the end effector in place and turn it: extended (x, y, phi) Jacobian.
  Eigen::Vector3d task(0.0, 0.0, map.orient_gain * a[0]);
  return damped_pinv_apply(pose_jacobian(arm, q), task, map.damping);
}

inline Mat mode_switch_basis(const ModeSwitchMap& map, const JointState& q) {
  const int m = map.ctx.arm.dof();
  Mat H(m, 2);
  H.col(0) = mode_switch_decode(map, q, Eigen::Vector2d(1.0, 0.0));
  H.col(1) = mode_switch_decode(map, q, Eigen::Vector2d(0.0, 1.0));
  return H;
}

// ---------------------------------------------------------------------------
// Decoding

// The m x d matrix that maps actions to joint velocities at `obs`, for maps
// that are linear in the action. Empty for CAE.
inline std::optional<Mat> linear_basis(const ActionMap& map, const Vec& obs) {
  return std::visit(
      [&](const auto& m) -> std::optional<Mat> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SclMap>) {
          return scl_basis(m, obs);
        } else if constexpr (std::is_same_v<T, PcaMap>) {
          return m.sigma;
        } else if constexpr (std::is_same_v<T, ModeSwitchMap>) {
          require_dims(m.ctx.obs.has_q() && obs.size() >= m.ctx.arm.dof(),
                       "mode switching needs q in the observation");
          return mode_switch_basis(m, obs.head(m.ctx.arm.dof()));
        } else {
          return std::nullopt;
        }
      },
      map);
}

// Decodes every column of `actions` (d x N) at one observation; returns m x N.
inline Mat decode_batch(const ActionMap& map, const Vec& obs, const Mat& actions) {
  require_dims(actions.rows() == latent_dim(map), "action width " +
                                                      std::to_string(actions.rows()) + " vs " +
                                                      std::to_string(latent_dim(map)));
  if (const auto* cae = std::get_if<CaeMap>(&map)) {
    require_dims(obs.size() + cae->d == cae->decoder.input_dim(), "observation width for CAE");
    Mat input(cae->decoder.input_dim(), actions.cols());
    input.topRows(obs.size()) = obs.replicate(1, actions.cols());
    input.bottomRows(cae->d) = actions;
    return mlp_output(cae->decoder, input);
  }
  if (const auto* ms = std::get_if<ModeSwitchMap>(&map)) {
    require_dims(ms->ctx.obs.has_q() && obs.size() >= ms->ctx.arm.dof(),
                 "mode switching needs q in the observation");
    Mat out(ms->ctx.arm.dof(), actions.cols());
    for (Eigen::Index i = 0; i < actions.cols(); ++i) {
      out.col(i) = mode_switch_decode(*ms, obs.head(ms->ctx.arm.dof()), actions.col(i));
    }
    return out;
  }
  return *linear_basis(map, obs) * actions;
}

inline JointVelocity decode(const ActionMap& map, const Vec& obs, const LatentAction& a) {
  if (const auto* ms = std::get_if<ModeSwitchMap>(&map)) {
    require_dims(ms->ctx.obs.has_q() && obs.size() >= ms->ctx.arm.dof(),
                 "mode switching needs q in the observation");
    return mode_switch_decode(*ms, obs.head(ms->ctx.arm.dof()), a);
  }
  return decode_batch(map, obs, Mat(a)).col(0);
}

// q' = q + dt * g(obs, a); dt = 1 is the unit-step transition operator.
inline JointState transition(const ActionMap& map, const JointState& q, const Vec& obs,
                             const LatentAction& a, double dt) {
  if (!(dt > 0.0)) throw DataError("dt must be positive");
  const JointVelocity qdot = decode(map, obs, a);
  require_dims(qdot.size() == q.size(), "decoded velocity vs q");
  return q + dt * qdot;
}

// Same, rebuilding the observation from q and the task target.
inline JointState transition(const ActionMap& map, const JointState& q,
                             const Eigen::Vector2d& target, const LatentAction& a, double dt) {
  return transition(map, q, context(map).observe(q, target), a, dt);
}

// ---------------------------------------------------------------------------
// PCA

inline PcaMap pca_fit(const std::vector<JointVelocity>& samples, int d, MapContext ctx = {}) {
  if (samples.empty()) throw DataError("PCA needs samples");
  const Eigen::Index m = samples.front().size();
  if (d < 1 || d > m) throw DataError("PCA dimension out of range");
  Mat X(m, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_dims(samples[i].size() == m, "PCA sample width");
    X.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  PcaMap pca;
  pca.ctx = std::move(ctx);
  pca.mean = X.rowwise().mean();
  const Mat centered = X.colwise() - pca.mean;
  const Mat cov = centered * centered.transpose() / static_cast<double>(X.cols());
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("PCA eigensolve failed");
  const Vec& values = eig.eigenvalues();  // ascending
  const double top = values[m - 1];
  if (!(values[m - d] > 1e-12 * std::max(top, 1e-300)) || !(top > 0.0)) {
    throw NumericError("PCA: data has rank below " + std::to_string(d));
  }
  pca.sigma.resize(m, d);
  for (int k = 0; k < d; ++k) {
    Vec c = eig.eigenvectors().col(m - 1 - k);
    Eigen::Index at = 0;
    c.cwiseAbs().maxCoeff(&at);
    if (c[at] < 0.0) c = -c;
    pca.sigma.col(k) = c;
  }
  return pca;
}

// a = (H^T H)^-1 H^T delta, the least-squares action producing joint change delta.
inline LatentAction pinv_action(const Mat& H, const Vec& delta) {
  require_dims(H.rows() == delta.size(), "basis rows vs delta");
  const Mat gram = H.transpose() * H;
  Eigen::LDLT<Mat> ldlt(gram);
  const double scale = gram.diagonal().size() ? gram.diagonal().maxCoeff() : 0.0;
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
      ldlt.vectorD().minCoeff() <= 1e-12 * scale) {
    throw NumericError("singular normal equations in pinv_action");
  }
  return ldlt.solve(H.transpose() * delta);
}

}  // namespace sclmaps

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

// Inverse-Jacobian reaching demonstrations toward targets spread on a line.

#include <random>
#include <vector>

#include "sclmaps/obs.hpp"

namespace sclmaps {

struct DemoConfig {
  Eigen::Vector2d line_start{0.55, -0.45};
  Eigen::Vector2d line_end{0.55, 0.45};
  int n_targets = 40;
  double kp = 1.0;
  double damping = 0.01;
  double dt = 0.05;
  int max_steps = 400;
  double stop_tol = 0.01;
  JointState q0 = default_start_configuration();
  unsigned long long seed = 1;

  void validate(const ArmModel& model) const {
    model.validate();
    check_state(model, q0);
    if (!(dt > 0.0)) throw DataError("dt must be positive");
    if (!(stop_tol > 0.0)) throw DataError("stop_tol must be positive");
    if (!(kp > 0.0)) throw DataError("kp must be positive");
    if (!(damping >= 0.0)) throw DataError("damping must be non-negative");
    if (max_steps < 0) throw DataError("max_steps must be non-negative");
    if (n_targets < 1) throw DataError("n_targets must be at least 1");
    // The reachable disk is convex, so checking the endpoints covers the segment.
    const double r = model.reach() + 1e-12;
    if (line_start.norm() > r || line_end.norm() > r) {
      throw DataError("target line leaves the reachable workspace");
    }
  }
};

struct Trajectory {
  int id = 0;
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
  std::vector<JointState> q;         // steps + 1 states
  std::vector<JointVelocity> qdot;   // one per step
  std::vector<Vec> obs;              // observation at each recorded step
  bool reached = false;

  int steps() const { return static_cast<int>(qdot.size()); }
};

// Evenly spaced points on the line; a seeded offset in [0, 1) shifts the whole
// comb so train, validation and test sets drawn with different seeds differ.
inline std::vector<Eigen::Vector2d> line_targets(const DemoConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double offset = unit(rng);
  std::vector<Eigen::Vector2d> targets;
  targets.reserve(cfg.n_targets);
  for (int k = 0; k < cfg.n_targets; ++k) {
    const double s = (k + offset) / cfg.n_targets;
    targets.push_back(cfg.line_start + s * (cfg.line_end - cfg.line_start));
  }
  return targets;
}

inline Trajectory run_demo(const ArmModel& model, const DemoConfig& cfg, const ObsSpec& obs_spec,
                           const Eigen::Vector2d& target, int id) {
  Trajectory traj;
  traj.id = id;
  traj.target = target;
  JointState q = cfg.q0;
  traj.q.push_back(q);
  for (int t = 0;; ++t) {
    const double err = (target - forward_kinematics(model, q).position()).norm();
    if (err < cfg.stop_tol) {
      traj.reached = true;
      break;
    }
    if (t >= cfg.max_steps) break;
    const JointVelocity qdot = ij_control_step(model, q, target, cfg.kp, cfg.damping);
    traj.obs.push_back(obs_spec.build(model, q, target));
    traj.qdot.push_back(qdot);
    q = step(q, qdot, cfg.dt);
    traj.q.push_back(q);
  }
  return traj;
}

inline std::vector<Trajectory> generate_demos(const ArmModel& model, const DemoConfig& cfg,
                                              const ObsSpec& obs_spec = ObsSpec::joints_only()) {
  cfg.validate(model);
  obs_spec.validate();
  std::vector<Trajectory> out;
  const auto targets = line_targets(cfg);
  out.reserve(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    out.push_back(run_demo(model, cfg, obs_spec, targets[k], static_cast<int>(k)));
  }
  return out;
}

}  // namespace sclmaps

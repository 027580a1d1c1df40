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

// Planar serial arm: kinematics, damped inverse-Jacobian control and the
// Euler joint-space stepper shared by demos, evaluation and teleoperation.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "sclmaps/error.hpp"

namespace sclmaps {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Joint angles q (rad) accumulated along the chain, and joint rates (rad/s).
using JointState = Vec;
using JointVelocity = Vec;

struct ArmModel {
  std::vector<double> link_lengths;

  int dof() const { return static_cast<int>(link_lengths.size()); }
  double reach() const {
    return std::accumulate(link_lengths.begin(), link_lengths.end(), 0.0);
  }

  void validate() const {
    if (link_lengths.size() < 2) throw DataError("arm needs at least 2 links");
    for (double l : link_lengths) {
      if (!(l > 0.0) || !std::isfinite(l)) throw DataError("link lengths must be positive");
    }
  }

  // 5 links of 0.2 m, unit reach.
  static ArmModel planar_default() { return ArmModel{std::vector<double>(5, 0.2)}; }
};

struct EePose {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  Eigen::Vector2d position() const { return {x, y}; }
};

inline void check_state(const ArmModel& model, const Vec& q) {
  require_dims(q.size() == model.dof(),
               "q has " + std::to_string(q.size()) + " entries, arm has " +
                   std::to_string(model.dof()) + " joints");
}

// Base, every joint and the end effector as columns of a 2 x (m+1) matrix.
inline Mat joint_positions(const ArmModel& model, const JointState& q) {
  check_state(model, q);
  const int m = model.dof();
  Mat p = Mat::Zero(2, m + 1);
  double angle = 0.0;
  for (int i = 0; i < m; ++i) {
    angle += q[i];
    p(0, i + 1) = p(0, i) + model.link_lengths[i] * std::cos(angle);
    p(1, i + 1) = p(1, i) + model.link_lengths[i] * std::sin(angle);
  }
  return p;
}

inline EePose forward_kinematics(const ArmModel& model, const JointState& q) {
  const Mat p = joint_positions(model, q);
  return EePose{p(0, model.dof()), p(1, model.dof()), q.sum()};
}

// d(x, y)/dq: column j is the end effector offset from joint j rotated by +90 deg.
inline Mat position_jacobian(const ArmModel& model, const JointState& q) {
  const Mat p = joint_positions(model, q);
  const int m = model.dof();
  Mat jac(2, m);
  for (int j = 0; j < m; ++j) {
    const Eigen::Vector2d r = p.col(m) - p.col(j);
    jac(0, j) = -r.y();
    jac(1, j) = r.x();
  }
  return jac;
}

// Position rows plus the orientation row (phi = sum q, so all ones).
inline Mat pose_jacobian(const ArmModel& model, const JointState& q) {
  const int m = model.dof();
  Mat jac(3, m);
  jac.topRows(2) = position_jacobian(model, q);
  jac.row(2).setOnes();
  return jac;
}

// qdot = J^T (J J^T + damping^2 I)^-1 * task_velocity for any k x m Jacobian.
inline Vec damped_pinv_apply(const Mat& jac, const Vec& task_velocity, double damping) {
  require_dims(jac.rows() == task_velocity.size(), "jacobian rows vs task velocity");
  Mat gram = jac * jac.transpose();
  gram.diagonal().array() += damping * damping;
  Eigen::LDLT<Mat> ldlt(gram);
  const double scale = std::max(gram.diagonal().maxCoeff(), 1e-300);
  const Vec d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * scale) {
    throw NumericError("singular J J^T in damped pseudo-inverse (damping = " +
                       std::to_string(damping) + ")");
  }
  return jac.transpose() * ldlt.solve(task_velocity);
}

inline JointVelocity ij_control_step(const ArmModel& model, const JointState& q,
                                     const Eigen::Vector2d& target, double kp, double damping) {
  const EePose ee = forward_kinematics(model, q);
  const Eigen::Vector2d error = target - ee.position();
  return damped_pinv_apply(position_jacobian(model, q), kp * error, damping);
}

inline JointState step(const JointState& q, const JointVelocity& qdot, double dt) {
  require_dims(q.size() == qdot.size(), "q vs qdot");
  if (!(dt > 0.0)) throw DataError("dt must be positive");
  return q + dt * qdot;
}

inline JointState default_start_configuration() {
  constexpr double quarter = std::numbers::pi / 4.0;
  Vec q(5);
  q << quarter, -quarter, quarter, -quarter, 0.0;
  return q;
}

}  // namespace sclmaps

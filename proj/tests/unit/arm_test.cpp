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


#include <random>

#include <gtest/gtest.h>

#include "sclmaps/demos.hpp"
#include "support/oracles.hpp"

namespace sclmaps {
namespace {

JointState random_q(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  JointState q(m);
  for (auto& x : q) x = u(rng);
  return q;
}

TEST(Kinematics, MatchesCumulativeAngleOracle) {
  std::mt19937_64 rng(1);
  for (int m : {1, 2, 5, 7}) {
    ArmModel arm{std::vector<double>(m, 0.0)};
    std::uniform_real_distribution<double> len(0.05, 0.6);
    for (auto& l : arm.link_lengths) l = len(rng);
    for (int trial = 0; trial < 50; ++trial) {
      const JointState q = random_q(rng, m);
      const auto [x, y] = oracle::fk(arm.link_lengths, q);
      const EePose ee = forward_kinematics(arm, q);
      EXPECT_NEAR(ee.x, x, 1e-12);
      EXPECT_NEAR(ee.y, y, 1e-12);
      EXPECT_NEAR(ee.phi, q.sum(), 1e-12);
    }
  }
}

TEST(Kinematics, ZeroConfigurationIsStraightAlongX) {
  const ArmModel arm = ArmModel::planar_default();
  const EePose ee = forward_kinematics(arm, JointState::Zero(5));
  EXPECT_NEAR(ee.x, 1.0, 1e-15);
  EXPECT_NEAR(ee.y, 0.0, 1e-15);
}

TEST(Kinematics, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const ArmModel arm = ArmModel::planar_default();
  for (int trial = 0; trial < 30; ++trial) {
    const JointState q = random_q(rng, 5);
    const Mat fd = oracle::fd_jacobian(
        [&](const Vec& x) {
          const EePose p = forward_kinematics(arm, x);
          return Vec(Eigen::Vector3d(p.x, p.y, p.phi));
        },
        q);
    EXPECT_LT((pose_jacobian(arm, q) - fd).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((position_jacobian(arm, q) - fd.topRows(2)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Kinematics, DimensionMismatchThrows) {
  const ArmModel arm = ArmModel::planar_default();
  EXPECT_THROW(forward_kinematics(arm, JointState::Zero(4)), DimensionError);
  EXPECT_THROW(position_jacobian(arm, JointState::Zero(6)), DimensionError);
}

TEST(ArmModelTest, RejectsBadLinks) {
  EXPECT_THROW(ArmModel{}.validate(), DataError);
  EXPECT_THROW((ArmModel{{0.2, -0.1}}.validate()), DataError);
  EXPECT_NO_THROW(ArmModel::planar_default().validate());
  EXPECT_DOUBLE_EQ(ArmModel::planar_default().reach(), 1.0);
}

TEST(DampedPinv, MatchesExplicitTwoByTwoInverse) {
  std::mt19937_64 rng(3);
  const ArmModel arm = ArmModel::planar_default();
  for (int trial = 0; trial < 50; ++trial) {
    const JointState q = random_q(rng, 5);
    const Mat J = position_jacobian(arm, q);
    const Vec v = Vec::Random(2);
    for (double damping : {0.0, 0.01, 0.3}) {
      if (damping == 0.0 && std::abs((J * J.transpose()).determinant()) < 1e-6) continue;
      const Vec ours = damped_pinv_apply(J, v, damping);
      const Vec ref = oracle::damped_pinv_2d(J, v, damping);
      EXPECT_LT((ours - ref).norm(), 1e-10 * std::max(1.0, ref.norm()));
    }
  }
}

TEST(DampedPinv, SingularWithoutDampingThrows) {
  const ArmModel arm = ArmModel::planar_default();
  // Fully stretched arm: J J^T is rank one.
  const Mat J = position_jacobian(arm, JointState::Zero(5));
  EXPECT_THROW(damped_pinv_apply(J, Vec::Ones(2), 0.0), NumericError);
  EXPECT_NO_THROW(damped_pinv_apply(J, Vec::Ones(2), 0.01));
}

TEST(DampedPinv, UndampedInverseReproducesTaskVelocity) {
  const ArmModel arm = ArmModel::planar_default();
  const JointState q = default_start_configuration();
  const Mat J = position_jacobian(arm, q);
  const Vec v = Eigen::Vector2d(0.3, -0.2);
  EXPECT_LT((J * damped_pinv_apply(J, v, 0.0) - v).norm(), 1e-12);
}

TEST(Controller, ConvergesToReachableTarget) {
  const ArmModel arm = ArmModel::planar_default();
  JointState q = default_start_configuration();
  const Eigen::Vector2d target(0.55, 0.2);
  for (int t = 0; t < 400; ++t) q = step(q, ij_control_step(arm, q, target, 1.0, 0.01), 0.05);
  EXPECT_LT((forward_kinematics(arm, q).position() - target).norm(), 1e-3);
}

TEST(StepTest, RejectsNonPositiveDt) {
  EXPECT_THROW(step(Vec::Zero(2), Vec::Zero(2), 0.0), DataError);
  EXPECT_THROW(step(Vec::Zero(2), Vec::Zero(2), -1.0), DataError);
  EXPECT_THROW(step(Vec::Zero(2), Vec::Zero(3), 1.0), DimensionError);
  EXPECT_TRUE(step(Vec::Ones(2), Vec::Ones(2), 0.5).isApprox(Vec::Constant(2, 1.5)));
}

TEST(ObsSpecTest, BuildsFeaturesInOrder) {
  const ArmModel arm = ArmModel::planar_default();
  ObsSpec spec;
  spec.features = {ObsFeature::q, ObsFeature::ee_position, ObsFeature::target_position,
                   ObsFeature::target_minus_ee};
  spec.validate();
  EXPECT_EQ(spec.dim(5), 11);
  const JointState q = default_start_configuration();
  const Eigen::Vector2d target(0.4, 0.1);
  const Vec o = spec.build(arm, q, target);
  const auto [x, y] = oracle::fk(arm.link_lengths, q);
  EXPECT_TRUE(o.head(5).isApprox(q));
  EXPECT_NEAR(o[5], x, 1e-14);
  EXPECT_NEAR(o[6], y, 1e-14);
  EXPECT_EQ(o[7], 0.4);
  EXPECT_EQ(o[8], 0.1);
  EXPECT_NEAR(o[9], 0.4 - x, 1e-14);
}

TEST(ObsSpecTest, JacobianMatchesFiniteDifferences) {
  const ArmModel arm = ArmModel::planar_default();
  ObsSpec spec;
  spec.features = {ObsFeature::q, ObsFeature::ee_position, ObsFeature::target_minus_ee};
  const Eigen::Vector2d target(0.3, 0.3);
  const JointState q = default_start_configuration();
  const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return spec.build(arm, x, target); }, q);
  EXPECT_LT((spec.jacobian(arm, q) - fd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ObsSpecTest, RejectsInvalidSpecs) {
  ObsSpec empty;
  empty.features.clear();
  EXPECT_THROW(empty.validate(), DataError);
  ObsSpec late;
  late.features = {ObsFeature::ee_position, ObsFeature::q};
  EXPECT_THROW(late.validate(), DataError);
  ObsSpec dup;
  dup.features = {ObsFeature::q, ObsFeature::q};
  EXPECT_THROW(dup.validate(), DataError);
  EXPECT_THROW(obs_feature_from_string("velocity"), DataError);
}

TEST(Demos, LineTargetsAreEvenlySpacedWithSeededOffset) {
  DemoConfig cfg;
  cfg.n_targets = 10;
  const auto a = line_targets(cfg);
  ASSERT_EQ(a.size(), 10u);
  const Eigen::Vector2d step = (cfg.line_end - cfg.line_start) / 10.0;
  for (std::size_t k = 1; k < a.size(); ++k) EXPECT_LT((a[k] - a[k - 1] - step).norm(), 1e-12);
  EXPECT_EQ(line_targets(cfg)[0], a[0]);
  cfg.seed = 99;
  EXPECT_NE(line_targets(cfg)[0], a[0]);
}

TEST(Demos, DefaultRunReachesEveryTarget) {
  const ArmModel arm = ArmModel::planar_default();
  DemoConfig cfg;
  const auto trajs = generate_demos(arm, cfg, ObsSpec{});
  ASSERT_EQ(trajs.size(), 40u);
  std::size_t tuples = 0;
  for (const auto& t : trajs) {
    EXPECT_TRUE(t.reached);
    EXPECT_EQ(t.q.size(), t.qdot.size() + 1);
    EXPECT_LT((forward_kinematics(arm, t.q.back()).position() - t.target).norm(), cfg.stop_tol);
    for (int s = 0; s < t.steps(); ++s) {
      EXPECT_TRUE(t.q[s + 1].isApprox(t.q[s] + cfg.dt * t.qdot[s]));
    }
    tuples += t.qdot.size();
  }
  // Hundreds to thousands of tuples, as in the reference data collection.
  EXPECT_GT(tuples, 500u);
  EXPECT_LT(tuples, 20000u);
}

TEST(Demos, TargetAtStartGivesEmptyTrajectory) {
  const ArmModel arm = ArmModel::planar_default();
  DemoConfig cfg;
  cfg.n_targets = 1;
  const Eigen::Vector2d start = forward_kinematics(arm, cfg.q0).position();
  cfg.line_start = start;
  cfg.line_end = start;
  const auto trajs = generate_demos(arm, cfg, ObsSpec{});
  ASSERT_EQ(trajs.size(), 1u);
  EXPECT_EQ(trajs[0].steps(), 0);
  EXPECT_TRUE(trajs[0].reached);
}

TEST(Demos, UnreachableLineIsRejected) {
  DemoConfig cfg;
  cfg.line_end = {2.0, 0.0};
  EXPECT_THROW(generate_demos(ArmModel::planar_default(), cfg, ObsSpec{}), DataError);
}

}  // namespace
}  // namespace sclmaps

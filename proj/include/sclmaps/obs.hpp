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

// Robot observation vectors assembled from the joint state and task target.

#include <algorithm>
#include <string>
#include <vector>

#include "sclmaps/arm.hpp"

namespace sclmaps {

enum class ObsFeature { q, ee_position, target_position, target_minus_ee };

inline std::string to_string(ObsFeature f) {
  switch (f) {
    case ObsFeature::q: return "q";
    case ObsFeature::ee_position: return "ee_position";
    case ObsFeature::target_position: return "target_position";
    case ObsFeature::target_minus_ee: return "target_minus_ee";
  }
  return "?";
}

inline ObsFeature obs_feature_from_string(const std::string& s) {
  if (s == "q") return ObsFeature::q;
  if (s == "ee_position") return ObsFeature::ee_position;
  if (s == "target_position") return ObsFeature::target_position;
  if (s == "target_minus_ee") return ObsFeature::target_minus_ee;
  throw DataError("unknown observation feature '" + s + "'");
}

struct ObsSpec {
  std::vector<ObsFeature> features{ObsFeature::q};

  static ObsSpec joints_only() { return {}; }

  void validate() const {
    if (features.empty()) throw DataError("observation spec is empty");
    auto it = std::find(features.begin(), features.end(), ObsFeature::q);
    if (it != features.end() && it != features.begin()) {
      throw DataError("q must be the first observation feature");
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (std::count(features.begin(), features.end(), features[i]) != 1) {
        throw DataError("duplicate observation feature " + to_string(features[i]));
      }
    }
  }

  bool has_q() const { return !features.empty() && features.front() == ObsFeature::q; }

  int dim(int m) const {
    int n = 0;
    for (auto f : features) n += (f == ObsFeature::q) ? m : 2;
    return n;
  }

  Vec build(const ArmModel& model, const JointState& q, const Eigen::Vector2d& target) const {
    const int m = model.dof();
    check_state(model, q);
    Vec o(dim(m));
    const Eigen::Vector2d ee = forward_kinematics(model, q).position();
    int at = 0;
    for (auto f : features) {
      switch (f) {
        case ObsFeature::q: o.segment(at, m) = q; at += m; break;
        case ObsFeature::ee_position: o.segment<2>(at) = ee; at += 2; break;
        case ObsFeature::target_position: o.segment<2>(at) = target; at += 2; break;
        case ObsFeature::target_minus_ee: o.segment<2>(at) = target - ee; at += 2; break;
      }
    }
    return o;
  }

  // d(obs)/dq, dim x m. The target is held fixed.
  Mat jacobian(const ArmModel& model, const JointState& q) const {
    const int m = model.dof();
    Mat jac = Mat::Zero(dim(m), m);
    Mat jee;
    bool have_jee = false;
    auto ee_jac = [&]() -> const Mat& {
      if (!have_jee) {
        jee = position_jacobian(model, q);
        have_jee = true;
      }
      return jee;
    };
    int at = 0;
    for (auto f : features) {
      switch (f) {
        case ObsFeature::q: jac.block(at, 0, m, m).setIdentity(); at += m; break;
        case ObsFeature::ee_position: jac.block(at, 0, 2, m) = ee_jac(); at += 2; break;
        case ObsFeature::target_position: at += 2; break;
        case ObsFeature::target_minus_ee: jac.block(at, 0, 2, m) = -ee_jac(); at += 2; break;
      }
    }
    return jac;
  }

  bool operator==(const ObsSpec&) const = default;
};

}  // namespace sclmaps

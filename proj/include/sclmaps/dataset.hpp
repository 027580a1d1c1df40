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

// Demonstration datasets: trajectories tagged with a split, flattened on demand
// into column-major tuple matrices for training.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sclmaps/demos.hpp"

namespace sclmaps {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

struct SplitFractions {
  double train = 0.75;
  double val = 0.25;
  double test = 0.0;
};

// Whole-trajectory assignment after a seeded shuffle. Validation and test get
// floor(fraction * n); the remainder goes to train.
inline std::vector<Split> split_dataset(int n_trajectories, const SplitFractions& f,
                                        unsigned long long seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test > 1.0 + 1e-12) {
    throw DataError("split fractions must be non-negative and sum to at most 1");
  }
  const int requested = (f.train > 0) + (f.val > 0) + (f.test > 0);
  if (n_trajectories < requested) {
    throw DataError("fewer trajectories (" + std::to_string(n_trajectories) +
                    ") than splits requested (" + std::to_string(requested) + ")");
  }
  const int n_val = static_cast<int>(std::floor(f.val * n_trajectories + 1e-9));
  const int n_test = static_cast<int>(std::floor(f.test * n_trajectories + 1e-9));
  const int n_train = n_trajectories - n_val - n_test;
  if ((f.val > 0 && n_val == 0) || (f.test > 0 && n_test == 0) ||
      (f.train > 0 && n_train == 0)) {
    throw DataError("fewer trajectories than splits requested");
  }
  std::vector<int> order(n_trajectories);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> out(n_trajectories, Split::train);
  for (int k = 0; k < n_val; ++k) out[order[k]] = Split::val;
  for (int k = 0; k < n_test; ++k) out[order[n_val + k]] = Split::test;
  return out;
}

struct DemoTuple {
  Vec obs;
  JointState q;
  JointVelocity qdot;
  Eigen::Vector2d target;
  int trajectory = 0;
  int step = 0;
};

// Columns are tuples.
struct TupleSet {
  Mat obs;
  Mat q;
  Mat qdot;
  Mat target;  // 2 x N

  Eigen::Index size() const { return q.cols(); }
};

struct Dataset {
  ArmModel arm = ArmModel::planar_default();
  ObsSpec obs;
  DemoConfig demo;  // generator settings, kept for provenance
  std::vector<Trajectory> trajectories;
  std::vector<Split> splits;  // one per trajectory

  void validate() const {
    if (trajectories.empty()) throw DataError("dataset has no trajectories");
    if (splits.size() != trajectories.size()) throw DataError("split tags do not cover trajectories");
    const int m = arm.dof();
    const int no = obs.dim(m);
    for (const auto& t : trajectories) {
      if (t.q.size() != t.qdot.size() + 1 || t.obs.size() != t.qdot.size()) {
        throw DataError("trajectory " + std::to_string(t.id) + " has inconsistent lengths");
      }
      for (std::size_t i = 0; i < t.qdot.size(); ++i) {
        if (t.q[i].size() != m || t.qdot[i].size() != m || t.obs[i].size() != no) {
          throw DataError("trajectory " + std::to_string(t.id) + " has wrong dimensions");
        }
      }
    }
  }

  std::vector<const Trajectory*> trajectories_in(Split s) const {
    std::vector<const Trajectory*> out;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      if (splits[i] == s) out.push_back(&trajectories[i]);
    }
    return out;
  }

  std::vector<DemoTuple> tuples(Split s) const {
    std::vector<DemoTuple> out;
    for (const auto* t : trajectories_in(s)) {
      for (int i = 0; i < t->steps(); ++i) {
        out.push_back(DemoTuple{t->obs[i], t->q[i], t->qdot[i], t->target, t->id, i});
      }
    }
    return out;
  }

  TupleSet tuple_set(Split s) const {
    const auto list = tuples(s);
    const int m = arm.dof();
    TupleSet set;
    const auto n = static_cast<Eigen::Index>(list.size());
    set.obs.resize(obs.dim(m), n);
    set.q.resize(m, n);
    set.qdot.resize(m, n);
    set.target.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      set.obs.col(i) = list[i].obs;
      set.q.col(i) = list[i].q;
      set.qdot.col(i) = list[i].qdot;
      set.target.col(i) = list[i].target;
    }
    return set;
  }

  std::vector<JointVelocity> velocities(Split s) const {
    std::vector<JointVelocity> out;
    for (const auto& t : tuples(s)) out.push_back(t.qdot);
    return out;
  }
};

inline Dataset make_dataset(const ArmModel& arm, const DemoConfig& demo, const ObsSpec& obs,
                            const SplitFractions& fractions) {
  Dataset ds;
  ds.arm = arm;
  ds.obs = obs;
  ds.demo = demo;
  ds.trajectories = generate_demos(arm, demo, obs);
  ds.splits = split_dataset(static_cast<int>(ds.trajectories.size()), fractions, demo.seed);
  return ds;
}

}  // namespace sclmaps

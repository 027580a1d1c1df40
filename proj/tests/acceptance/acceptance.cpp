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


// Acceptance checks. `acceptance --criterion N` runs one criterion, no flag
// runs all seven; each prints one PASS/FAIL line and the exit code is nonzero
// if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "sclmaps/eval.hpp"
#include "sclmaps/persist.hpp"
#include "support/oracles.hpp"

namespace {

using namespace sclmaps;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a sub-check; every failing one is named in the detail line.
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const Dataset& default_dataset() {
  static const Dataset ds =
      make_dataset(ArmModel::planar_default(), DemoConfig{}, ObsSpec{}, {0.75, 0.25, 0.0});
  return ds;
}

TrainConfig scl_config(int hidden, int epochs, bool ortho, bool lipschitz, double L,
                       unsigned long long seed = 0) {
  TrainConfig cfg;
  cfg.hidden = {hidden, hidden};
  cfg.epochs = epochs;
  cfg.orthonormalize = ortho;
  cfg.lipschitz = {lipschitz, L};
  cfg.seed = seed;
  return cfg;
}

// `n` observation columns drawn with replacement from the validation split.
Mat sample_val_obs(const Dataset& ds, int n, unsigned long long seed) {
  const Mat all = ds.tuple_set(Split::val).obs;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, all.cols() - 1);
  Mat out(all.rows(), n);
  for (int i = 0; i < n; ++i) out.col(i) = all.col(pick(rng));
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& ds = default_dataset();
  const SclMap map = train_scl(ds, scl_config(64, 50, true, true, 1.0)).map;
  const Mat obs = sample_val_obs(ds, 1000, 101);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    const Mat H = scl_basis(map, obs.col(i));
    const Mat E = H.transpose() * H - Mat::Identity(H.cols(), H.cols());
    worst = std::max(worst, E.cwiseAbs().rowwise().sum().maxCoeff());
  }
  const double t = seconds_since(t0);
  o.detail << "max ||H^T H - I||_inf = " << worst << " over 1000 val obs (limit 1e-5), " << t << " s";
  o.require(worst < 1e-5, "orthonormality");
  o.require(t < 10.0, "runtime < 10 s");
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& ds = default_dataset();
  const std::vector<ActionMap> maps{ActionMap(train_scl(ds, scl_config(32, 10, true, true, 1.0)).map),
                                    ActionMap(pca_fit(ds.velocities(Split::train), 2))};
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> angle(-2.5, 2.5), scale(-5.0, 5.0), mag(0.01, 3.0);
  std::normal_distribution<double> gauss;
  double worst_scale = 0.0, worst_zero = 0.0;
  for (const auto& map : maps) {
    const MapContext& ctx = context(map);
    for (int t = 0; t < 1000; ++t) {
      JointState q(5);
      for (auto& x : q) x = angle(rng);
      const Vec obs = ctx.observe(q, Eigen::Vector2d(0.55, angle(rng) / 5.0));
      Vec a(2);
      for (auto& x : a) x = gauss(rng);
      a *= mag(rng) / a.norm();
      const double alpha = scale(rng);
      const Vec base = alpha * decode(map, obs, a);
      const Vec scaled = decode(map, obs, Vec(alpha * a));
      const double ref = std::max(base.norm(), std::numeric_limits<double>::min());
      worst_scale = std::max(worst_scale, (scaled - base).norm() / ref);
      const double unit = std::max(decode(map, obs, a).norm(), std::numeric_limits<double>::min());
      worst_zero = std::max(worst_zero, decode(map, obs, Vec::Zero(2)).norm() / unit);
    }
  }
  const double t = seconds_since(t0);
  o.detail << "scl+pca over 2 x 1000 trials: max rel err scaling " << worst_scale << ", zero input "
           << worst_zero << " (limit 1e-9), " << t << " s";
  o.require(worst_scale <= 1e-9, "proportionality");
  o.require(worst_zero <= 1e-9, "zero-input stillness");
  o.require(t < 10.0, "runtime < 10 s");
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& ds = default_dataset();
  const ActionMap map(train_scl(ds, scl_config(64, 200, true, true, 1.0)).map);
  const auto all = task_states(ds, Split::val);
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<TaskState> states;
  for (int i = 0; i < 100; ++i) states.push_back(all[pick(rng)]);
  const std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const RecordTable rec = run_soft_reversibility(map, states, alphas, 1, 1.0, 31);
  double worst = 100.0;
  long qualifying = 0, qualifying_reversed = 0;
  o.detail << "reversed %:";
  for (double a : alphas) {
    const RecordTable sub = rec.where("alpha", a);
    const auto rev = sub.column("reversed");
    const auto qual = sub.column("qualifies");
    double n_rev = 0.0;
    for (std::size_t i = 0; i < rev.size(); ++i) {
      n_rev += rev[i];
      if (qual[i] == 1.0) {
        ++qualifying;
        qualifying_reversed += rev[i] == 1.0;
      }
    }
    const double pct = 100.0 * n_rev / static_cast<double>(rev.size());
    worst = std::min(worst, pct);
    o.detail << " " << pct;
  }
  const double t = seconds_since(t0);
  o.detail << " for alpha = 0.1..0.9 (limit >= 95); conditional " << qualifying_reversed << "/"
           << qualifying << " qualifying trials reversed; " << t << " s";
  o.require(worst >= 95.0, "per-alpha reversal rate");
  o.require(qualifying > 0 && qualifying_reversed == qualifying, "conditional form");
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& ds = default_dataset();
  const Mat val = ds.tuple_set(Split::val).obs;
  constexpr double K = 0.99;
  constexpr long kPairs = 10000;
  const auto cons = train_scl(ds, scl_config(64, 200, false, true, K));
  const auto cons_gs = train_scl(ds, scl_config(64, 200, true, true, K));
  const auto free = train_scl(ds, scl_config(64, 200, false, false, K));
  const auto free_gs = train_scl(ds, scl_config(64, 200, true, false, K));
  const double cons_pre = run_lipschitz_check(cons.map, val, K, kPairs, 41, false).percentage;
  const double cons_gs_pre = run_lipschitz_check(cons_gs.map, val, K, kPairs, 41, false).percentage;
  const double cons_gs_post = run_lipschitz_check(cons_gs.map, val, K, kPairs, 41, true).percentage;
  const double free_pre = run_lipschitz_check(free.map, val, K, kPairs, 41, false).percentage;
  const double free_gs_post = run_lipschitz_check(free_gs.map, val, K, kPairs, 41, true).percentage;
  const double t = seconds_since(t0);
  o.detail << "constrained pre-GS " << cons_pre << "% / " << cons_gs_pre << "% (GS model), constrained post-GS "
           << cons_gs_post << "%, unconstrained " << free_pre << "%; val RMSE constrained "
           << cons.report.best_val_rmse << " vs unconstrained " << free.report.best_val_rmse
           << " (with GS: " << cons_gs.report.best_val_rmse << " vs " << free_gs.report.best_val_rmse
           << ", unconstrained post-GS " << free_gs_post << "%, info only); " << t << " s";
  o.require(cons_pre == 100.0 && cons_gs_pre == 100.0, "constrained pre-GS = 100%");
  o.require(cons_gs_post >= 99.0, "constrained post-GS >= 99%");
  o.require(free_pre < 95.0, "unconstrained < 95%");
  o.require(cons.report.best_val_rmse > free.report.best_val_rmse, "RMSE ordering");
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr int kSeeds = 10;
  constexpr double kEndThreshold = 0.05;  // rad, set from the pilot run
  const Dataset& ds = default_dataset();
  DemoConfig test_demo;
  test_demo.n_targets = 100;
  test_demo.seed = 2;
  const Dataset test_set =
      make_dataset(ArmModel::planar_default(), test_demo, ObsSpec{}, {0.0, 0.0, 1.0});
  const auto tests = test_set.trajectories_in(Split::test);
  ReachParams reach;
  reach.horizon = 100;
  reach.n_samples = 4096;

  const fs::path dir = default_output_dir() / "acceptance";
  fs::create_directories(dir);
  const std::vector<std::string> labels{"scl+gs", "scl", "cae"};
  std::vector<std::vector<double>> end(labels.size()), ret(labels.size());
  for (int seed = 0; seed < kSeeds; ++seed) {
    for (std::size_t k = 0; k < labels.size(); ++k) {
      TrainConfig cfg = scl_config(64, 200, k == 0, true, 1.0, static_cast<unsigned long long>(seed));
      const ActionMap map = k < 2 ? ActionMap(train_scl(ds, cfg).map) : ActionMap(train_cae(ds, cfg).map);
      reach.seed = static_cast<unsigned long long>(seed);
      RecordTable rec = run_reaching_eval(map, tests, reach);
      rec.map_kind = map_kind(map);
      save_records(dir / ("reach_" + labels[k] + "_seed" + std::to_string(seed) + ".records.jsonl"), rec);
      for (double v : rec.column("end_error")) end[k].push_back(v);
      for (double v : rec.column("return_error")) ret[k].push_back(v);
    }
  }
  Json summary{{"format", "sclmaps-summary"},
               {"format_version", kFormatVersion},
               {"experiment", "reach-study"},
               {"seeds", kSeeds},
               {"n_targets", tests.size()},
               {"horizon", reach.horizon},
               {"n_samples", reach.n_samples},
               {"end_error_threshold", kEndThreshold},
               {"maps", Json::object()}};
  std::vector<SummaryStats> end_s, ret_s;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    end_s.push_back(summarize(end[k]));
    ret_s.push_back(summarize(ret[k]));
    summary["maps"][labels[k]] = Json{{"end_error", to_json(end_s[k])}, {"return_error", to_json(ret_s[k])}};
  }
  bool any = false;
  for (std::size_t k = 0; k < 2; ++k) {
    any = any || (ret_s[k].median < ret_s[2].median && end_s[k].median < kEndThreshold);
  }
  summary["pass"] = any;
  write_atomic(dir / "reach_summary.json", summary.dump(2) + "\n");
  const double t = seconds_since(t0);
  o.detail << "medians end/return:";
  for (std::size_t k = 0; k < labels.size(); ++k) {
    o.detail << " " << labels[k] << " " << end_s[k].median << "/" << ret_s[k].median;
  }
  o.detail << " (" << kSeeds << " seeds x " << tests.size() << " targets, end limit " << kEndThreshold
           << " rad); " << t << " s; artifacts in " << dir.string();
  o.require(any, "an SCL variant beats CAE on return and reaches the end threshold");
  o.require(t <= 1800.0, "runtime <= 30 min");
  return o;
}

// Largest relative error between analytic and central-difference gradients.
double fd_check(const Mlp& net, const MlpGrads& analytic, const std::function<double(const Mlp&)>& loss) {
  const Vec numeric = finite_difference_gradient(
      [&](const Vec& theta) {
        Mlp copy = net;
        unflatten(copy, theta);
        return loss(copy);
      },
      flatten(net));
  return relative_error(flatten(analytic), numeric);
}

Outcome criterion6() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& ds = default_dataset();

  // PCA against a Jacobi eigendecomposition of the sample covariance.
  const auto velocities = ds.velocities(Split::train);
  Mat X(5, static_cast<Eigen::Index>(velocities.size()));
  for (std::size_t i = 0; i < velocities.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = velocities[i];
  const PcaMap pca = pca_fit(velocities, 3);
  const Mat ref = oracle::principal_components(X, 3);
  double min_cos = 1.0;
  for (int k = 0; k < 3; ++k) min_cos = std::min(min_cos, std::abs(pca.sigma.col(k).dot(ref.col(k))));

  // Gradients.
  std::mt19937_64 rng(606);
  const std::vector<int> hidden{8, 8};
  double grad_err = 0.0;
  {
    Mlp net = make_mlp(4, hidden, 3, rng);
    for (auto& l : net.layers) l.b = Vec::Random(l.b.size()) * 0.3;
    const Mat x = Mat::Random(4, 6), target = Mat::Random(3, 6);
    const MlpPass pass = mlp_forward(net, x);
    const MlpBackward back = mlp_backward(net, pass.tape, 2.0 * (pass.output - target));
    grad_err = std::max(grad_err, fd_check(net, back.params, [&](const Mlp& n) {
                          return (mlp_output(n, x) - target).squaredNorm();
                        }));
    const Vec x0 = x.col(0), t0v = target.col(0);
    const MlpPass p1 = mlp_forward(net, Mat(x0));
    const Vec gin = mlp_backward(net, p1.tape, 2.0 * (p1.output - Mat(t0v))).input.col(0);
    const Vec gnum = finite_difference_gradient(
        [&](const Vec& xx) { return (mlp_output(net, xx) - t0v).squaredNorm(); }, x0);
    grad_err = std::max(grad_err, relative_error(gin, gnum));
  }
  for (auto [m, d] : {std::pair{5, 2}, {5, 4}, {3, 3}}) {
    const Mat H = Mat::Random(m, d), G = Mat::Random(m, d);
    const Mat analytic = gram_schmidt_backward(H, G);
    const Vec numeric = finite_difference_gradient(
        [&](const Vec& v) {
          const Mat Hv = Eigen::Map<const Mat>(v.data(), m, d);
          return (G.array() * gram_schmidt(Hv).array()).sum();
        },
        Eigen::Map<const Vec>(H.data(), H.size()));
    grad_err = std::max(grad_err, relative_error(Eigen::Map<const Vec>(analytic.data(), analytic.size()), numeric));
  }
  {
    MapContext ctx;
    ctx.obs.features = {ObsFeature::q, ObsFeature::ee_position, ObsFeature::target_position};
    const int n_obs = ctx.obs.dim(5);
    Mlp dec = make_mlp(n_obs + 2, hidden, 5, rng);
    for (auto& l : dec.layers) l.b = Vec::Random(l.b.size()) * 0.3;
    const Mat obs = Mat::Random(n_obs, 6), obs2 = Mat::Random(n_obs, 6), A = Mat::Random(2, 6);
    const Mat q = Mat::Random(5, 6), targets = Mat::Random(2, 6) * 0.5;
    const Vec alphas = (Vec::Random(6).array() * 0.4 + 0.5).matrix();
    grad_err = std::max(grad_err, fd_check(dec, proportionality_term(dec, obs, A, alphas).grads, [&](const Mlp& n) {
                          return proportionality_term(n, obs, A, alphas).value;
                        }));
    grad_err = std::max(grad_err, fd_check(dec, reversibility_term(dec, ctx, q, targets, A, 0.7).grads,
                                           [&](const Mlp& n) {
                                             return reversibility_term(n, ctx, q, targets, A, 0.7).value;
                                           }));
    grad_err = std::max(grad_err, fd_check(dec, consistency_term(dec, obs, obs2, obs, obs2, A, 2.0).grads,
                                           [&](const Mlp& n) {
                                             return consistency_term(n, obs, obs2, obs, obs2, A, 2.0).value;
                                           }));
  }
  for (bool ortho : {false, true}) {
    const std::vector<int> h{8};
    Mlp enc = make_mlp(10, h, 2, rng);
    Mlp trunk = make_mlp(5, h, 10, rng);
    const Mat obs = Mat::Random(5, 7), qdot = Mat::Random(5, 7);
    const auto b = detail::scl_batch(enc, trunk, 5, 2, ortho, obs, qdot, true);
    grad_err = std::max(grad_err, fd_check(trunk, b.trunk, [&](const Mlp& n) {
                          return detail::scl_batch(enc, n, 5, 2, ortho, obs, qdot, false).loss;
                        }));
    grad_err = std::max(grad_err, fd_check(enc, b.encoder, [&](const Mlp& n) {
                          return detail::scl_batch(n, trunk, 5, 2, ortho, obs, qdot, false).loss;
                        }));
  }

  // pinv_action against an explicit normal-equation solve.
  double pinv_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Mat H = Mat::Random(5, 2);
    const Vec delta = Vec::Random(5);
    const Vec direct = oracle::inverse(H.transpose() * H) * (H.transpose() * delta);
    pinv_err = std::max(pinv_err, (pinv_action(H, delta) - direct).norm());
  }

  // PCA iterative reversal.
  const ActionMap pca_map(pca_fit(velocities, 2));
  const auto states = task_states(ds, Split::val);
  int worst_steps = 0;
  double worst_eT = 0.0;
  bool one_step = true;
  for (int k = 0; k < 100; ++k) {
    const auto r = run_iterative_reversibility(pca_map, states[static_cast<std::size_t>(k * 13) % states.size()],
                                               0.1 + 0.05 * (k % 10), 1e-12, 50, static_cast<unsigned long long>(k));
    one_step = one_step && r.converged && r.steps == 1;
    worst_steps = std::max(worst_steps, r.steps);
    worst_eT = std::max(worst_eT, r.eT);
  }
  const double t = seconds_since(t0);
  o.detail << "PCA min |cos| " << min_cos << "; max gradient rel err " << grad_err << "; pinv err " << pinv_err
           << "; PCA reversal steps " << worst_steps << " eT " << worst_eT << "; " << t << " s";
  o.require(min_cos > 0.999, "PCA vs eigendecomposition");
  o.require(grad_err < 1e-4, "finite-difference gradients");
  o.require(pinv_err < 1e-8, "pinv_action");
  o.require(one_step && worst_eT <= 1e-12, "PCA iterative reversal");
  o.require(t < 60.0, "runtime < 1 min");
  return o;
}

FormatErrc error_code(const std::function<void()>& f, bool& threw) {
  try {
    f();
  } catch (const FormatError& e) {
    threw = true;
    return e.code();
  }
  threw = false;
  return FormatErrc::io_error;
}

Outcome criterion7() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("sclmaps_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Every map kind through a weight file.
  std::mt19937_64 rng(707);
  MapContext ctx;
  ctx.obs.features = {ObsFeature::q, ObsFeature::ee_position, ObsFeature::target_position};
  const int n_obs = ctx.obs.dim(5);
  const std::vector<int> hidden{7, 6};
  SclMap scl;
  scl.ctx = ctx;
  scl.m = 5;
  scl.d = 2;
  scl.trunk = make_mlp(n_obs, hidden, 10, rng);
  scl.lipschitz = {true, 0.75, 9};
  for (auto& l : scl.trunk.layers) l.b = Vec::Random(l.b.size());
  CaeMap cae;
  cae.ctx = ctx;
  cae.m = 5;
  cae.d = 3;
  cae.decoder = make_mlp(n_obs + 3, hidden, 5, rng);
  const ActionMap pca = pca_fit(default_dataset().velocities(Split::train), 2);
  ModeSwitchMap ms;
  ms.mode = ControlMode::orient;
  const std::vector<ActionMap> maps{scl, cae, pca, ms};
  bool bit_exact = true;
  for (const auto& map : maps) {
    const fs::path p = dir / (map_kind(map) + ".weights.json");
    save_weights(p, {map, {3, 5, 0.125}, Json{{"note", "acceptance"}}});
    const WeightFile back = load_weights(p);
    const int d = latent_dim(map);
    for (int t = 0; t < 20; ++t) {
      const JointState q = Vec::Random(5);
      const Vec obs = context(map).observe(q, Eigen::Vector2d::Random());
      const Mat A = Mat::Random(d, 8);
      bit_exact = bit_exact && decode_batch(back.map, obs, A) == decode_batch(map, obs, A) &&
                  transition(back.map, q, obs, Vec(A.col(0)), 0.05) == transition(map, q, obs, Vec(A.col(0)), 0.05);
    }
  }

  // Dataset round trip.
  DemoConfig demo;
  demo.n_targets = 6;
  const Dataset ds = make_dataset(ArmModel::planar_default(), demo, ctx.obs, {0.5, 0.25, 0.25});
  const fs::path dp = dir / "demos.jsonl";
  save_dataset(dp, ds);
  const Dataset dback = load_dataset(dp);
  bool ds_exact = dback.splits == ds.splits && dback.trajectories.size() == ds.trajectories.size();
  for (std::size_t i = 0; ds_exact && i < ds.trajectories.size(); ++i) {
    const auto &a = ds.trajectories[i], &b = dback.trajectories[i];
    ds_exact = a.q == b.q && a.qdot == b.qdot && a.obs == b.obs && a.target == b.target;
  }
  ds_exact = ds_exact && dataset_to_text(dback) == dataset_to_text(ds);

  // Schema violations, each with its code; the target object stays untouched.
  const Json good = weights_to_json({scl, {}, Json::object()});
  const std::string ds_text = dataset_to_text(ds);
  const Json ds_header = Json::parse(ds_text.substr(0, ds_text.find('\n')));
  const std::string ds_body = ds_text.substr(ds_text.find('\n'));
  struct Case {
    std::string name;
    FormatErrc expected;
    std::function<void(WeightFile&, Dataset&)> load;
  };
  auto bad_weights = [&](const std::function<void(Json&)>& edit) {
    return [&good, edit](WeightFile& wf, Dataset&) {
      Json j = good;
      edit(j);
      wf = weights_from_json(j);
    };
  };
  auto bad_dataset = [&](const std::function<void(Json&)>& edit) {
    return [&ds_header, &ds_body, edit](WeightFile&, Dataset& out) {
      Json h = ds_header;
      edit(h);
      out = dataset_from_text(h.dump() + ds_body);
    };
  };
  const fs::path half = dir / "half.json";
  std::ofstream(half) << good.dump().substr(0, good.dump().size() / 2);
  const std::vector<Case> cases{
      {"weights version", FormatErrc::version_mismatch, bad_weights([](Json& j) { j["format_version"] = 2; })},
      {"weights layer shape", FormatErrc::shape_mismatch,
       bad_weights([](Json& j) { j["layers"][0]["weights"].erase(0); })},
      {"weights m", FormatErrc::shape_mismatch, bad_weights([](Json& j) { j["m"] = 4; })},
      {"weights kind", FormatErrc::schema_violation, bad_weights([](Json& j) { j["kind"] = "table"; })},
      {"weights missing field", FormatErrc::schema_violation, bad_weights([](Json& j) { j.erase("fingerprint"); })},
      {"weights truncated", FormatErrc::truncated, [&](WeightFile& wf, Dataset&) { wf = load_weights(half); }},
      {"weights missing file", FormatErrc::io_error,
       [&](WeightFile& wf, Dataset&) { wf = load_weights(dir / "absent.json"); }},
      {"dataset version", FormatErrc::version_mismatch, bad_dataset([](Json& h) { h["format_version"] = 0; })},
      {"dataset obs dim", FormatErrc::shape_mismatch, bad_dataset([](Json& h) { h["obs_spec"]["dim"] = 3; })},
      {"dataset split", FormatErrc::schema_violation,
       bad_dataset([](Json& h) { h["trajectories"][0]["split"] = "holdout"; })},
      {"dataset truncated", FormatErrc::truncated,
       [&](WeightFile&, Dataset& out) { out = dataset_from_text(ds_text.substr(0, ds_text.size() - 20)); }},
  };
  int codes_ok = 0;
  bool untouched = true;
  for (const auto& c : cases) {
    WeightFile wf{ms, {}, Json::object()};
    Dataset out;
    bool threw = false;
    const FormatErrc code = error_code([&] { c.load(wf, out); }, threw);
    const bool ok = threw && code == c.expected;
    codes_ok += ok;
    if (!ok) o.detail << " [" << c.name << ": got " << (threw ? to_string(code) : "no error") << "]";
    untouched = untouched && map_kind(wf.map) == "mode_switch" && out.trajectories.empty();
  }

  // A failed save keeps the previous file.
  const fs::path keep = dir / "keep.json";
  save_weights(keep, {pca, {}, Json::object()});
  const std::string before = detail::read_file(keep);
  fs::create_directories(keep.string() + ".tmp");
  bool save_threw = false;
  try {
    save_weights(keep, {scl, {}, Json::object()});
  } catch (const std::exception&) {
    save_threw = true;
  }
  const bool kept = save_threw && detail::read_file(keep) == before;
  fs::remove_all(dir);

  o.detail << "weights bit-exact " << (bit_exact ? "yes" : "no") << " for 4 kinds; dataset bit-exact "
           << (ds_exact ? "yes" : "no") << "; error codes " << codes_ok << "/" << cases.size()
           << "; no partial loads " << (untouched ? "yes" : "no") << "; failed save keeps file "
           << (kept ? "yes" : "no");
  o.require(bit_exact, "weight round trip");
  o.require(ds_exact, "dataset round trip");
  o.require(codes_ok == static_cast<int>(cases.size()), "error codes");
  o.require(untouched, "no partial loads");
  o.require(kept, "atomic save");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sclmaps acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run one criterion (1-7); all when omitted")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, Outcome (*)()>> all{
      {"orthonormality", criterion1},     {"proportionality", criterion2}, {"soft reversibility", criterion3},
      {"lipschitz table", criterion4},    {"reaching study", criterion5},  {"oracle equivalences", criterion6},
      {"persistence", criterion7}};
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i) + 1) continue;
    Outcome o;
    try {
      o = all[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " error: " << e.what();
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << all[i].first << ": "
              << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

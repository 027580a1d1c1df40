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


// sclmaps command-line interface. Every subcommand accepts --config <file>
// (TOML or INI); config keys are the long flag names, grouped in sections
// named after the subcommand, e.g. [train] or [eval.reach]. Flags given on the
// command line override the file. Unknown keys are rejected.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sclmaps/persist.hpp"
#include "sclmaps/teleop_server.hpp"

namespace fs = std::filesystem;
using namespace sclmaps;

namespace {

struct Common {
  std::string out_dir;
  unsigned long long seed = 0;

  fs::path dir() const { return out_dir.empty() ? default_output_dir() : fs::path(out_dir); }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out-dir", c.out_dir, "Output directory (default: $SCLMAPS_OUT or .)");
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

// ---------------------------------------------------------------------------
// gen-demos

struct GenDemosArgs {
  Common common;
  std::vector<double> links = ArmModel::planar_default().link_lengths;
  std::vector<std::string> obs{"q"};
  DemoConfig demo;
  std::vector<double> line_start{0.55, -0.45};
  std::vector<double> line_end{0.55, 0.45};
  std::vector<double> q0;
  double val_frac = 0.25;
  double test_frac = 0.0;
  std::string out = "demos.jsonl";
};

ObsSpec parse_obs(const std::vector<std::string>& names) {
  ObsSpec spec;
  spec.features.clear();
  for (const auto& n : names) spec.features.push_back(obs_feature_from_string(n));
  spec.validate();
  return spec;
}

void setup_gen_demos(CLI::App& app, GenDemosArgs& a) {
  auto* c = app.add_subcommand("gen-demos", "Generate inverse-Jacobian demonstrations");
  add_common(c, a.common);
  c->add_option("--links", a.links, "Link lengths")->capture_default_str();
  c->add_option("--obs", a.obs, "Observation features (q, ee_position, target_position, target_minus_ee)")
      ->capture_default_str();
  c->add_option("--n-targets", a.demo.n_targets, "Targets along the line")->capture_default_str();
  c->add_option("--line-start", a.line_start, "Target line start (x y)")->expected(2)->capture_default_str();
  c->add_option("--line-end", a.line_end, "Target line end (x y)")->expected(2)->capture_default_str();
  c->add_option("--kp", a.demo.kp, "Controller gain")->capture_default_str();
  c->add_option("--damping", a.demo.damping, "Pseudo-inverse damping")->capture_default_str();
  c->add_option("--dt", a.demo.dt, "Integration step")->capture_default_str();
  c->add_option("--max-steps", a.demo.max_steps, "Step cap per trajectory")->capture_default_str();
  c->add_option("--stop-tol", a.demo.stop_tol, "Stop when the end effector is this close")->capture_default_str();
  c->add_option("--q0", a.q0, "Start configuration (default: arm default)");
  c->add_option("--val-frac", a.val_frac, "Validation fraction")->capture_default_str();
  c->add_option("--test-frac", a.test_frac, "Test fraction")->capture_default_str();
  c->add_option("--out", a.out, "Dataset file name (relative to --out-dir)")->capture_default_str();
}

fs::path resolve(const Common& c, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : c.dir() / p;
}

int run_gen_demos(GenDemosArgs& a) {
  ArmModel arm{a.links};
  arm.validate();
  ObsSpec obs = parse_obs(a.obs);
  a.demo.line_start = {a.line_start[0], a.line_start[1]};
  a.demo.line_end = {a.line_end[0], a.line_end[1]};
  a.demo.seed = a.common.seed;
  if (!a.q0.empty()) {
    a.demo.q0 = Eigen::Map<const Vec>(a.q0.data(), static_cast<Eigen::Index>(a.q0.size()));
  } else if (arm.dof() != 5) {
    a.demo.q0 = JointState::Zero(arm.dof());
  }
  SplitFractions f{1.0 - a.val_frac - a.test_frac, a.val_frac, a.test_frac};
  Dataset ds = make_dataset(arm, a.demo, obs, f);
  const Json config{{"command", "gen-demos"},
                    {"seed", a.common.seed},
                    {"fractions", {{"train", f.train}, {"val", f.val}, {"test", f.test}}}};
  const fs::path path = resolve(a.common, a.out);
  save_dataset(path, ds, config);
  std::cout << "wrote " << path.string() << "\n";
  for (Split s : {Split::train, Split::val, Split::test}) {
    std::cout << to_string(s) << ": " << ds.trajectories_in(s).size() << " trajectories, "
              << ds.tuples(s).size() << " tuples\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string dataset;
  std::string kind = "scl";
  TrainConfig cfg;
  std::string out_prefix = "model";
};

void add_train_options(CLI::App* c, TrainConfig& cfg) {
  c->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
  c->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
  c->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
  c->add_option("--d", cfg.d, "Latent action dimension")->capture_default_str();
  c->add_option("--hidden", cfg.hidden, "Hidden layer widths")->capture_default_str();
  c->add_option("--orthonormalize", cfg.orthonormalize, "Gram-Schmidt head (SCL)")->capture_default_str();
  c->add_option("--lipschitz", cfg.lipschitz.enabled, "Project trunk weights (SCL)")->capture_default_str();
  c->add_option("--lipschitz-L", cfg.lipschitz.L, "Trunk Lipschitz bound")->capture_default_str();
  c->add_option("--power-iters", cfg.lipschitz.power_iters, "Power iterations per projection")
      ->capture_default_str();
  c->add_option("--n-models", cfg.n_models, "Models trained with seeds seed..seed+n-1")->capture_default_str();
  c->add_option("--w-prop", cfg.aux.w_prop, "Proportionality loss weight (CAE)")->capture_default_str();
  c->add_option("--w-rev", cfg.aux.w_rev, "Reversibility loss weight (CAE)")->capture_default_str();
  c->add_option("--w-con", cfg.aux.w_con, "Consistency loss weight (CAE)")->capture_default_str();
  c->add_option("--alpha-lo", cfg.aux.alpha_lo, "Proportionality scale range low")->capture_default_str();
  c->add_option("--alpha-hi", cfg.aux.alpha_hi, "Proportionality scale range high")->capture_default_str();
  c->add_option("--gamma", cfg.aux.gamma, "Consistency temperature")->capture_default_str();
  c->add_option("--rev-dt", cfg.aux.rev_dt, "Step inside the reversibility loss")->capture_default_str();
  c->add_option("--gaussian-actions", cfg.aux.gaussian_actions, "Aux losses sample a ~ N(0, I)")
      ->capture_default_str();
}

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"d", c.d},
              {"hidden", c.hidden},
              {"seed", c.seed},
              {"orthonormalize", c.orthonormalize},
              {"lipschitz", {{"enabled", c.lipschitz.enabled}, {"L", c.lipschitz.L},
                             {"power_iters", c.lipschitz.power_iters}}},
              {"n_models", c.n_models},
              {"aux", {{"w_prop", c.aux.w_prop}, {"w_rev", c.aux.w_rev}, {"w_con", c.aux.w_con},
                       {"alpha_lo", c.aux.alpha_lo}, {"alpha_hi", c.aux.alpha_hi},
                       {"gamma", c.aux.gamma}, {"rev_dt", c.aux.rev_dt},
                       {"gaussian_actions", c.aux.gaussian_actions}}}};
}

void setup_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train SCL or CAE maps");
  add_common(c, a.common);
  c->add_option("--dataset", a.dataset, "Dataset file")->required();
  c->add_option("--kind", a.kind, "scl or cae")->check(CLI::IsMember({"scl", "cae"}))->capture_default_str();
  c->add_option("--out-prefix", a.out_prefix, "Weight file prefix")->capture_default_str();
  add_train_options(c, a.cfg);
}

int run_train(TrainArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  a.cfg.seed = a.common.seed;
  a.cfg.validate();
  RecordTable report;
  report.experiment = "train";
  report.map_kind = a.kind;
  report.seed = a.common.seed;
  report.dt = ds.demo.dt;
  report.config = Json{{"command", "train"}, {"dataset", a.dataset}, {"train", to_json(a.cfg)}};
  report.columns = {"model_seed", "failed", "best_epoch", "best_val_rmse", "final_train_rmse", "clamp_count"};
  std::vector<TrainReport> ok_reports;
  std::vector<fs::path> ok_paths;
  int failures = 0;
  for (int i = 0; i < a.cfg.n_models; ++i) {
    TrainConfig cfg = a.cfg;
    cfg.seed = a.cfg.seed + static_cast<unsigned long long>(i);
    cfg.n_models = 1;
    try {
      WeightFile wf;
      TrainReport rep;
      if (a.kind == "scl") {
        auto t = train_scl(ds, cfg);
        wf.map = std::move(t.map);
        rep = t.report;
      } else {
        auto t = train_cae(ds, cfg);
        wf.map = std::move(t.map);
        rep = t.report;
      }
      wf.fingerprint = {cfg.seed, rep.epochs, rep.best_val_rmse};
      wf.config = Json{{"command", "train"}, {"dataset", a.dataset}, {"train", to_json(cfg)}};
      const fs::path path = resolve(a.common, a.out_prefix + "_seed" + std::to_string(cfg.seed) + ".weights.json");
      save_weights(path, wf);
      report.add_row({static_cast<double>(cfg.seed), 0.0, static_cast<double>(rep.best_epoch), rep.best_val_rmse,
                      rep.train_rmse.empty() ? kDidNotConverge : rep.train_rmse.back(),
                      static_cast<double>(rep.clamp_count)});
      ok_reports.push_back(rep);
      ok_paths.push_back(path);
      std::cout << "seed " << cfg.seed << ": best val rmse " << rep.best_val_rmse << " (epoch "
                << rep.best_epoch << ") -> " << path.string() << "\n";
    } catch (const NumericError& e) {
      ++failures;
      report.add_row({static_cast<double>(cfg.seed), 1.0, kDidNotConverge, kDidNotConverge, kDidNotConverge,
                      kDidNotConverge});
      std::cerr << "seed " << cfg.seed << " failed: " << e.what() << "\n";
    }
  }
  save_records(resolve(a.common, a.out_prefix + ".report.jsonl"), report);
  if (ok_reports.empty()) throw NumericError("every model failed to train");
  const std::size_t best = select_best(ok_reports);
  const fs::path best_path = resolve(a.common, a.out_prefix + "_best.weights.json");
  write_atomic(best_path, detail::read_file(ok_paths[best]));
  std::cout << "best: seed " << ok_reports[best].seed << " -> " << best_path.string() << "\n";
  return failures > 0 ? static_cast<int>(ExitCode::numeric) : 0;
}

// ---------------------------------------------------------------------------
// pca-fit

struct PcaArgs {
  Common common;
  std::string dataset;
  int d = 2;
  std::string out = "pca.weights.json";
};

void setup_pca(CLI::App& app, PcaArgs& a) {
  auto* c = app.add_subcommand("pca-fit", "Fit a PCA map to training-split velocities");
  add_common(c, a.common);
  c->add_option("--dataset", a.dataset, "Dataset file")->required();
  c->add_option("--d", a.d, "Number of components")->capture_default_str();
  c->add_option("--out", a.out, "Weight file name")->capture_default_str();
}

int run_pca(PcaArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  WeightFile wf;
  wf.map = pca_fit(ds.velocities(Split::train), a.d, MapContext{ds.arm, ds.obs});
  wf.fingerprint = {a.common.seed, 0, 0.0};
  wf.config = Json{{"command", "pca-fit"}, {"dataset", a.dataset}, {"d", a.d}};
  const fs::path path = resolve(a.common, a.out);
  save_weights(path, wf);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string weights;
  std::string dataset;
  std::string split = "val";
  std::string prefix;
  // lipschitz
  double L = 0.99;
  long pairs = 10000;
  bool post_gs = false;
  // reversibility / proportionality / iter-reversibility
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int states = 100;
  int per_state = 1;
  double dt = 1.0;
  double rev_L = 1.0;
  int dirs = 10;
  double action_norm = 1.0;
  double alpha = 0.5;
  double eps = 1e-6;
  int max_iter = 50;
  // reach / grid
  std::string test_dataset;
  ReachParams reach;
  TrainConfig train;
  std::vector<std::string> cells{"scl+gs+lip", "scl+lip", "cae"};
};

void add_eval_io(CLI::App* c, EvalArgs& a, bool weights) {
  add_common(c, a.common);
  if (weights) c->add_option("--weights", a.weights, "Weight file")->required();
  c->add_option("--dataset", a.dataset, "Dataset file")->required();
  c->add_option("--split", a.split, "Dataset split supplying states")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  c->add_option("--prefix", a.prefix, "Output file prefix (default: experiment name)");
}

std::vector<TaskState> sample_states(const Dataset& ds, Split split, int n, unsigned long long seed) {
  const auto all = task_states(ds, split);
  if (all.empty()) throw DataError("split '" + to_string(split) + "' holds no states");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<TaskState> out;
  for (int i = 0; i < n; ++i) out.push_back(all[pick(rng)]);
  return out;
}

void write_outputs(const EvalArgs& a, RecordTable rec, const std::vector<std::string>& stats,
                   const std::string& group_by) {
  rec.config["weights"] = a.weights;
  rec.config["dataset"] = a.dataset;
  rec.config["split"] = a.split;
  const std::string stem = a.prefix.empty() ? rec.experiment : a.prefix;
  const fs::path rpath = resolve(a.common, stem + ".records.jsonl");
  const fs::path spath = resolve(a.common, stem + ".summary.json");
  save_records(rpath, rec);
  const Json summary = summarize_records(rec, stats, group_by);
  write_atomic(spath, summary.dump(1) + "\n");
  for (const auto& g : summary["groups"]) {
    if (!group_by.empty()) std::cout << group_by << " " << g[group_by].get<double>() << ": ";
    bool first = true;
    for (const auto& c : stats) {
      const Json& s = g["stats"][c];
      std::cout << (first ? "" : ", ") << c << " mean "
                << (s.is_null() ? std::string("n/a") : std::to_string(s["mean"].get<double>()));
      first = false;
    }
    std::cout << "\n";
  }
  std::cout << "wrote " << rpath.string() << " and " << spath.string() << "\n";
}

int run_eval_lipschitz(EvalArgs& a) {
  const WeightFile wf = load_weights(a.weights);
  const auto* scl = std::get_if<SclMap>(&wf.map);
  if (!scl) throw DataError("Lipschitz check needs an SCL map");
  const Dataset ds = load_dataset(a.dataset);
  const TupleSet set = ds.tuple_set(split_from_string(a.split));
  const auto r = run_lipschitz_check(*scl, set.obs, a.L, a.pairs, a.common.seed, a.post_gs);
  RecordTable rec;
  rec.experiment = "lipschitz";
  rec.map_kind = "scl";
  rec.seed = a.common.seed;
  rec.dt = ds.demo.dt;
  rec.columns = {"L", "post_gs", "n_pairs", "percentage", "ratio_median", "ratio_q75"};
  rec.config = Json{{"L", a.L}, {"pairs", a.pairs}, {"post_gs", a.post_gs}};
  rec.add_row({a.L, a.post_gs ? 1.0 : 0.0, static_cast<double>(r.n_pairs), r.percentage, r.ratio.median,
               r.ratio.q75});
  std::cout << "Lipschitz (K = " << a.L << (a.post_gs ? ", post-GS" : ", pre-GS") << "): " << r.percentage
            << "% of " << r.n_pairs << " pairs\n";
  write_outputs(a, rec, {"percentage"}, "");
  return 0;
}

int run_eval_reversibility(EvalArgs& a) {
  const WeightFile wf = load_weights(a.weights);
  const Dataset ds = load_dataset(a.dataset);
  const auto states = sample_states(ds, split_from_string(a.split), a.states, a.common.seed);
  RecordTable rec = run_soft_reversibility(wf.map, states, a.alphas, a.per_state, a.dt, a.common.seed, a.rev_L);
  write_outputs(a, std::move(rec), {"e_fwd", "e_rev", "reversed", "qualifies"}, "alpha");
  return 0;
}

int run_eval_iter(EvalArgs& a) {
  const WeightFile wf = load_weights(a.weights);
  const Dataset ds = load_dataset(a.dataset);
  const auto states = sample_states(ds, split_from_string(a.split), a.states, a.common.seed);
  RecordTable rec;
  rec.experiment = "iter_reversibility";
  rec.map_kind = map_kind(wf.map);
  rec.seed = a.common.seed;
  rec.dt = 1.0;
  rec.columns = {"state", "e0", "eT", "steps", "converged"};
  rec.config = Json{{"alpha", a.alpha}, {"eps", a.eps}, {"max_iter", a.max_iter}};
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto r = run_iterative_reversibility(wf.map, states[i], a.alpha, a.eps, a.max_iter, a.common.seed + i);
    rec.add_row({static_cast<double>(i), r.e0, r.eT, static_cast<double>(r.steps), r.converged ? 1.0 : 0.0});
  }
  write_outputs(a, std::move(rec), {"e0", "eT", "steps", "converged"}, "");
  return 0;
}

int run_eval_prop(EvalArgs& a) {
  const WeightFile wf = load_weights(a.weights);
  const Dataset ds = load_dataset(a.dataset);
  const auto states = sample_states(ds, split_from_string(a.split), a.states, a.common.seed);
  RecordTable rec = run_proportionality_eval(wf.map, states, a.alphas, a.dirs, a.action_norm, a.dt, a.common.seed);
  write_outputs(a, std::move(rec), {"r_ee", "r_q", "skipped"}, "alpha");
  return 0;
}

std::vector<const Trajectory*> reach_targets(const EvalArgs& a, const Dataset& ds, Dataset& holder) {
  if (!a.test_dataset.empty()) {
    holder = load_dataset(a.test_dataset);
    auto t = holder.trajectories_in(split_from_string(a.split));
    if (t.empty()) throw DataError("test dataset split '" + a.split + "' is empty");
    return t;
  }
  auto t = ds.trajectories_in(split_from_string(a.split));
  if (t.empty()) throw DataError("split '" + a.split + "' is empty; pass --test-dataset");
  return t;
}

int run_eval_reach(EvalArgs& a) {
  const WeightFile wf = load_weights(a.weights);
  const Dataset ds = load_dataset(a.dataset);
  Dataset holder;
  const auto tests = reach_targets(a, ds, holder);
  a.reach.seed = a.common.seed;
  RecordTable rec = run_reaching_eval(wf.map, tests, a.reach);
  rec.map_kind = map_kind(wf.map);
  rec.config["test_dataset"] = a.test_dataset;
  write_outputs(a, std::move(rec), {"end_error", "return_error", "end_steps", "return_steps"}, "");
  return 0;
}

GridCell parse_cell(const std::string& label) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : label + "+") {
    if (ch == '+') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (parts.empty()) throw DataError("empty grid cell");
  GridCell cell;
  cell.kind = parts[0];
  if (cell.kind == "scl") {
    cell.orthonormalize = false;
    cell.lipschitz = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i] == "gs") cell.orthonormalize = true;
      else if (parts[i] == "lip") cell.lipschitz = true;
      else throw DataError("unknown SCL grid flag '" + parts[i] + "'");
    }
  } else if (cell.kind == "cae") {
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i] == "prop") cell.aux.w_prop = 1.0;
      else if (parts[i] == "rev") cell.aux.w_rev = 1.0;
      else if (parts[i] == "con") cell.aux.w_con = 1.0;
      else throw DataError("unknown CAE grid flag '" + parts[i] + "'");
    }
  } else {
    throw DataError("grid cells are scl[+gs][+lip] or cae[+prop][+rev][+con], got '" + label + "'");
  }
  return cell;
}

int run_eval_grid(EvalArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  Dataset holder;
  a.split = a.split == "val" ? "test" : a.split;
  const auto tests = reach_targets(a, ds, holder);
  std::vector<GridCell> cells;
  for (const auto& c : a.cells) cells.push_back(parse_cell(c));
  a.train.seed = a.common.seed;
  a.train.validate();
  a.reach.seed = a.common.seed;
  const auto rows = run_grid(ds, tests, a.train, cells, a.reach);
  Json table = Json::array();
  for (const auto& row : rows) {
    Json r{{"cell", row.cell.label()}, {"failed", row.failed}};
    if (row.failed) {
      r["failure"] = row.failure;
      std::cout << row.cell.label() << ": failed (" << row.failure << ")\n";
    } else {
      r["end_error"] = sclmaps::to_json(row.end_error);
      r["return_error"] = sclmaps::to_json(row.return_error);
      EvalArgs sub = a;
      sub.prefix = (a.prefix.empty() ? std::string("grid") : a.prefix) + "_" + row.cell.label();
      RecordTable rec = row.records;
      rec.config["train"] = to_json(a.train);
      save_records(resolve(a.common, sub.prefix + ".records.jsonl"), rec);
      std::cout << row.cell.label() << ": end median " << row.end_error.median << ", return median "
                << row.return_error.median << "\n";
    }
    table.push_back(r);
  }
  const Json summary{{"format", "sclmaps-grid"},
                     {"format_version", kFormatVersion},
                     {"seed", a.common.seed},
                     {"train", to_json(a.train)},
                     {"reach", {{"horizon", a.reach.horizon}, {"dt", a.reach.dt}, {"tol", a.reach.tol},
                                {"n_samples", a.reach.n_samples}}},
                     {"rows", table}};
  const fs::path path = resolve(a.common, (a.prefix.empty() ? std::string("grid") : a.prefix) + ".summary.json");
  write_atomic(path, summary.dump(1) + "\n");
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

struct EvalCommands {
  CLI::App* lipschitz = nullptr;
  CLI::App* reversibility = nullptr;
  CLI::App* iter = nullptr;
  CLI::App* prop = nullptr;
  CLI::App* reach = nullptr;
  CLI::App* grid = nullptr;
};

void add_reach_options(CLI::App* c, EvalArgs& a) {
  c->add_option("--test-dataset", a.test_dataset, "Dataset holding the target trajectories");
  c->add_option("--horizon", a.reach.horizon, "Greedy steps per phase")->capture_default_str();
  c->add_option("--dt", a.reach.dt, "Step size")->capture_default_str();
  c->add_option("--tol", a.reach.tol, "Joint-space success radius")->capture_default_str();
  c->add_option("--samples", a.reach.n_samples, "Greedy action samples")->capture_default_str();
}

EvalCommands setup_eval(CLI::App& app, EvalArgs& a) {
  auto* ev = app.add_subcommand("eval", "Run an experiment on trained maps");
  ev->require_subcommand(1);
  EvalCommands e;
  e.lipschitz = ev->add_subcommand("lipschitz", "Lipschitz check over random state pairs");
  add_eval_io(e.lipschitz, a, true);
  e.lipschitz->add_option("--L", a.L, "Lipschitz constant checked")->capture_default_str();
  e.lipschitz->add_option("--pairs", a.pairs, "Number of pairs")->capture_default_str();
  e.lipschitz->add_option("--post-gs", a.post_gs, "Check the orthonormalized basis")->capture_default_str();

  e.reversibility = ev->add_subcommand("reversibility", "Soft-reversibility sweep");
  add_eval_io(e.reversibility, a, true);
  e.reversibility->add_option("--alphas", a.alphas, "Action norms")->capture_default_str();
  e.reversibility->add_option("--states", a.states, "States sampled from the split")->capture_default_str();
  e.reversibility->add_option("--per-state", a.per_state, "Actions per state")->capture_default_str();
  e.reversibility->add_option("--dt", a.dt, "Transition step")->capture_default_str();
  e.reversibility->add_option("--L", a.rev_L, "Lipschitz constant for the conditional check")
      ->capture_default_str();

  e.iter = ev->add_subcommand("iter-reversibility", "Iterative least-squares reversal");
  add_eval_io(e.iter, a, true);
  e.iter->add_option("--alpha", a.alpha, "Action norm")->capture_default_str();
  e.iter->add_option("--eps", a.eps, "Convergence radius")->capture_default_str();
  e.iter->add_option("--max-iter", a.max_iter, "Iteration cap")->capture_default_str();
  e.iter->add_option("--states", a.states, "States sampled from the split")->capture_default_str();

  e.prop = ev->add_subcommand("proportionality", "Proportionality ratios");
  add_eval_io(e.prop, a, true);
  e.prop->add_option("--alphas", a.alphas, "Scale factors")->capture_default_str();
  e.prop->add_option("--states", a.states, "States sampled from the split")->capture_default_str();
  e.prop->add_option("--dirs", a.dirs, "Directions per state")->capture_default_str();
  e.prop->add_option("--action-norm", a.action_norm, "Base action norm")->capture_default_str();
  e.prop->add_option("--dt", a.dt, "Transition step")->capture_default_str();

  e.reach = ev->add_subcommand("reach", "Greedy-user reaching study");
  add_eval_io(e.reach, a, true);
  add_reach_options(e.reach, a);

  e.grid = ev->add_subcommand("grid", "Train and evaluate a grid of map variants");
  add_eval_io(e.grid, a, false);
  add_reach_options(e.grid, a);
  e.grid->add_option("--cells", a.cells, "Cells: scl[+gs][+lip] or cae[+prop][+rev][+con]")
      ->capture_default_str();
  add_train_options(e.grid, a.train);
  return e;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  std::vector<std::string> weights;
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  double rate = 40.0;
  double speed_scale = 1.0;
  double dt = 0.0;
  bool mode_switch = true;
};

void setup_serve(CLI::App& app, ServeArgs& a) {
  auto* c = app.add_subcommand("serve", "Serve maps for live teleoperation over websocket");
  c->add_option("--weights", a.weights, "Weight files, optionally name=path")->required();
  c->add_option("--address", a.address, "Listen address")->capture_default_str();
  c->add_option("--port", a.port, "Listen port (0 picks one)")->capture_default_str();
  c->add_option("--rate", a.rate, "Control rate in Hz")->capture_default_str();
  c->add_option("--speed-scale", a.speed_scale, "rad/s per unit action")->capture_default_str();
  c->add_option("--dt", a.dt, "Step per tick; overrides --speed-scale when set");
  c->add_option("--mode-switch", a.mode_switch, "Also offer the mode-switching map")->capture_default_str();
}

int run_serve(ServeArgs& a) {
  auto catalog = std::make_shared<TeleopCatalog>();
  catalog->config.rate = a.rate;
  catalog->config.speed_scale = a.dt > 0.0 ? a.dt * a.rate : a.speed_scale;
  std::set<std::string> names;
  for (const auto& spec : a.weights) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    WeightFile wf = load_weights(path);
    std::string name = eq == std::string::npos ? map_kind(wf.map) : spec.substr(0, eq);
    if (names.count(name)) {
      int k = 2;
      while (names.count(name + std::to_string(k))) ++k;
      name += std::to_string(k);
    }
    names.insert(name);
    if (catalog->maps.empty()) catalog->arm = context(wf.map).arm;
    catalog->maps.emplace_back(name, std::move(wf.map));
  }
  if (a.mode_switch && !names.count("mode_switch")) {
    ModeSwitchMap ms;
    ms.ctx.arm = catalog->arm;
    catalog->maps.emplace_back("mode_switch", ms);
  }
  catalog->tasks = default_tasks(catalog->arm);
  catalog->validate();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServerOptions opts;
  opts.address = a.address;
  opts.port = a.port;
  TeleopServer server(catalog, opts);
  std::cout << "serving " << catalog->maps.size() << " maps on ws://" << a.address << ":" << server.port()
            << "/session?task=<id> at " << a.rate << " Hz" << std::endl;
  std::thread io([&] { server.run(); });
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  io.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn and evaluate low-dimensional action maps for planar arms"};
  app.set_config("--config", "", "TOML or INI configuration file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  GenDemosArgs gen;
  TrainArgs train;
  PcaArgs pca;
  EvalArgs eval;
  ServeArgs serve;
  setup_gen_demos(app, gen);
  setup_train(app, train);
  setup_pca(app, pca);
  const EvalCommands ev = setup_eval(app, eval);
  setup_serve(app, serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (app.got_subcommand("gen-demos")) return run_gen_demos(gen);
    if (app.got_subcommand("train")) return run_train(train);
    if (app.got_subcommand("pca-fit")) return run_pca(pca);
    if (app.got_subcommand("serve")) return run_serve(serve);
    if (ev.lipschitz->parsed()) return run_eval_lipschitz(eval);
    if (ev.reversibility->parsed()) return run_eval_reversibility(eval);
    if (ev.iter->parsed()) return run_eval_iter(eval);
    if (ev.prop->parsed()) return run_eval_prop(eval);
    if (ev.reach->parsed()) return run_eval_reach(eval);
    if (ev.grid->parsed()) return run_eval_grid(eval);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numeric);
  } catch (const FormatError& e) {
    std::cerr << "data error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const boost::system::system_error& e) {
    std::cerr << "cannot serve: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
  return static_cast<int>(ExitCode::usage);
}

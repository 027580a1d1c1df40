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

// On-disk formats: weight documents, line-delimited datasets and experiment
// records. Doubles are written in shortest round-trip form, so every numeric
// field survives save -> load bit-exactly. Schemas: docs/formats.md.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sclmaps/eval.hpp"
#include "sclmaps/records.hpp"

namespace sclmaps {

inline constexpr int kFormatVersion = 1;

enum class FormatErrc { io_error, truncated, version_mismatch, shape_mismatch, schema_violation };

inline std::string to_string(FormatErrc c) {
  switch (c) {
    case FormatErrc::io_error: return "io_error";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::version_mismatch: return "version_mismatch";
    case FormatErrc::shape_mismatch: return "shape_mismatch";
    case FormatErrc::schema_violation: return "schema_violation";
  }
  return "?";
}

class FormatError : public DataError {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : DataError(to_string(code) + ": " + what), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

// Default output directory for commands that are not given one.
inline std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("SCLMAPS_OUT"); env && *env) return env;
  return ".";
}

// ---------------------------------------------------------------------------
// Low-level helpers

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& what) {
  throw FormatError(FormatErrc::schema_violation, what);
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) schema_fail(std::string("expected an object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) schema_fail(std::string("missing field '") + key + "'");
  return *it;
}

template <class T>
T get(const Json& j, const char* key) {
  const Json& v = field(j, key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    schema_fail(std::string("field '") + key + "' has the wrong type");
  }
}

inline std::vector<double> doubles(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_array()) schema_fail(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) schema_fail(std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline Vec vec(const Json& j, const char* key, Eigen::Index expected = -1) {
  const auto v = doubles(j, key);
  if (expected >= 0 && static_cast<Eigen::Index>(v.size()) != expected) {
    throw FormatError(FormatErrc::shape_mismatch,
                      std::string("field '") + key + "' has " + std::to_string(v.size()) +
                          " values, expected " + std::to_string(expected));
  }
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Json vec_json(const Vec& v) { return Json(std::vector<double>(v.begin(), v.end())); }

inline Json row_major(const Mat& M) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(M.size()));
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) out.push_back(M(r, c));
  }
  return Json(out);
}

inline Mat matrix_from(const Json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  const auto v = doubles(j, key);
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw FormatError(FormatErrc::shape_mismatch,
                      std::string("field '") + key + "' has " + std::to_string(v.size()) +
                          " values, declared shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  Mat M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  }
  return M;
}

inline void check_header(const Json& j, const char* format) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    schema_fail(std::string("not a ") + format + " document");
  }
  const int version = get<int>(j, "format_version");
  if (version != kFormatVersion) {
    throw FormatError(FormatErrc::version_mismatch,
                      "format_version " + std::to_string(version) + " is not supported (reader is " +
                          std::to_string(kFormatVersion) + ")");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_document(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // An unterminated document is the signature of a cut-off file.
    const bool at_end = e.byte >= text.size();
    throw FormatError(at_end ? FormatErrc::truncated : FormatErrc::schema_violation,
                      what + ": " + e.what());
  }
}

}  // namespace detail

// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::io_error, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw FormatError(FormatErrc::io_error, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Shared pieces

inline Json to_json(const ArmModel& arm) { return Json{{"link_lengths", arm.link_lengths}}; }

inline ArmModel arm_from_json(const Json& j) {
  ArmModel arm{detail::doubles(j, "link_lengths")};
  try {
    arm.validate();
  } catch (const DataError& e) {
    detail::schema_fail(e.what());
  }
  return arm;
}

inline Json to_json(const ObsSpec& spec, int m) {
  Json features = Json::array();
  for (auto f : spec.features) features.push_back(to_string(f));
  return Json{{"features", features}, {"dim", spec.dim(m)}};
}

inline ObsSpec obs_spec_from_json(const Json& j, int m) {
  ObsSpec spec;
  spec.features.clear();
  const Json& f = detail::field(j, "features");
  if (!f.is_array()) detail::schema_fail("obs_spec.features must be an array");
  try {
    for (const auto& x : f) spec.features.push_back(obs_feature_from_string(x.get<std::string>()));
    spec.validate();
  } catch (const DataError& e) {
    detail::schema_fail(e.what());
  } catch (const nlohmann::json::exception&) {
    detail::schema_fail("obs_spec.features must hold strings");
  }
  if (detail::get<int>(j, "dim") != spec.dim(m)) {
    throw FormatError(FormatErrc::shape_mismatch, "obs_spec.dim does not match its features");
  }
  return spec;
}

inline Json to_json(const Mlp& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers) {
    layers.push_back(Json{{"rows", l.out()},
                          {"cols", l.in()},
                          {"activation", to_string(l.activation)},
                          {"weights", detail::row_major(l.W)},
                          {"bias", detail::vec_json(l.b)}});
  }
  return layers;
}

inline Mlp mlp_from_json(const Json& layers) {
  if (!layers.is_array() || layers.empty()) detail::schema_fail("layer list must be a non-empty array");
  Mlp net;
  for (const auto& lj : layers) {
    DenseLayer l;
    const auto rows = detail::get<long>(lj, "rows");
    const auto cols = detail::get<long>(lj, "cols");
    if (rows < 1 || cols < 1) throw FormatError(FormatErrc::shape_mismatch, "layer shape must be positive");
    try {
      l.activation = activation_from_string(detail::get<std::string>(lj, "activation"));
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      detail::schema_fail(e.what());
    }
    l.W = detail::matrix_from(lj, "weights", rows, cols);
    l.b = detail::vec(lj, "bias", rows);
    if (!net.layers.empty() && net.layers.back().out() != l.in()) {
      throw FormatError(FormatErrc::shape_mismatch, "layer shapes do not chain");
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Weight files

struct Fingerprint {
  unsigned long long seed = 0;
  int epochs = 0;
  double best_val_rmse = 0.0;
};

struct WeightFile {
  ActionMap map;
  Fingerprint fingerprint;
  Json config = Json::object();
};

inline Json weights_to_json(const WeightFile& wf) {
  const MapContext& ctx = context(wf.map);
  const int m = ctx.arm.dof();
  Json j;
  j["format"] = "sclmaps-weights";
  j["format_version"] = kFormatVersion;
  j["kind"] = map_kind(wf.map);
  j["arm"] = to_json(ctx.arm);
  j["obs_spec"] = to_json(ctx.obs, m);
  j["m"] = m;
  j["d"] = latent_dim(wf.map);
  Json flags = Json::object();
  std::visit(
      [&](const auto& map) {
        using T = std::decay_t<decltype(map)>;
        if constexpr (std::is_same_v<T, SclMap>) {
          flags["orthonormalize"] = map.orthonormalize;
          flags["lipschitz"] = Json{{"enabled", map.lipschitz.enabled},
                                    {"L", map.lipschitz.L},
                                    {"power_iters", map.lipschitz.power_iters}};
          j["layers"] = to_json(map.trunk);
        } else if constexpr (std::is_same_v<T, CaeMap>) {
          j["layers"] = to_json(map.decoder);
        } else if constexpr (std::is_same_v<T, PcaMap>) {
          j["sigma"] = Json{{"rows", map.sigma.rows()},
                            {"cols", map.sigma.cols()},
                            {"values", detail::row_major(map.sigma)}};
          j["mean"] = detail::vec_json(map.mean);
        } else {
          j["mode_switch"] = Json{{"mode", to_string(map.mode)},
                                  {"xy_gain", map.xy_gain},
                                  {"orient_gain", map.orient_gain},
                                  {"damping", map.damping}};
        }
      },
      wf.map);
  j["flags"] = flags;
  j["fingerprint"] = Json{{"seed", wf.fingerprint.seed},
                          {"epochs", wf.fingerprint.epochs},
                          {"best_val_rmse", wf.fingerprint.best_val_rmse}};
  j["config"] = wf.config;
  return j;
}

inline WeightFile weights_from_json(const Json& j) {
  detail::check_header(j, "sclmaps-weights");
  WeightFile wf;
  MapContext ctx;
  ctx.arm = arm_from_json(detail::field(j, "arm"));
  const int m = detail::get<int>(j, "m");
  const int d = detail::get<int>(j, "d");
  if (m != ctx.arm.dof()) throw FormatError(FormatErrc::shape_mismatch, "m does not match the arm");
  if (d < 1 || d > m) throw FormatError(FormatErrc::shape_mismatch, "d out of range");
  ctx.obs = obs_spec_from_json(detail::field(j, "obs_spec"), m);
  const int n_obs = ctx.obs.dim(m);
  const auto kind = detail::get<std::string>(j, "kind");
  const Json& flags = detail::field(j, "flags");
  if (kind == "scl") {
    SclMap map;
    map.ctx = ctx;
    map.m = m;
    map.d = d;
    map.orthonormalize = detail::get<bool>(flags, "orthonormalize");
    const Json& lip = detail::field(flags, "lipschitz");
    map.lipschitz.enabled = detail::get<bool>(lip, "enabled");
    map.lipschitz.L = detail::get<double>(lip, "L");
    map.lipschitz.power_iters = detail::get<int>(lip, "power_iters");
    map.trunk = mlp_from_json(detail::field(j, "layers"));
    if (map.trunk.input_dim() != n_obs || map.trunk.output_dim() != m * d) {
      throw FormatError(FormatErrc::shape_mismatch, "SCL trunk does not map obs to m*d");
    }
    wf.map = std::move(map);
  } else if (kind == "cae") {
    CaeMap map;
    map.ctx = ctx;
    map.m = m;
    map.d = d;
    map.decoder = mlp_from_json(detail::field(j, "layers"));
    if (map.decoder.input_dim() != n_obs + d || map.decoder.output_dim() != m) {
      throw FormatError(FormatErrc::shape_mismatch, "CAE decoder does not map obs++a to m");
    }
    wf.map = std::move(map);
  } else if (kind == "pca") {
    PcaMap map;
    map.ctx = ctx;
    const Json& s = detail::field(j, "sigma");
    const auto rows = detail::get<long>(s, "rows");
    const auto cols = detail::get<long>(s, "cols");
    if (rows != m || cols != d) throw FormatError(FormatErrc::shape_mismatch, "sigma must be m x d");
    map.sigma = detail::matrix_from(s, "values", rows, cols);
    map.mean = detail::vec(j, "mean", m);
    wf.map = std::move(map);
  } else if (kind == "mode_switch") {
    ModeSwitchMap map;
    map.ctx = ctx;
    const Json& ms = detail::field(j, "mode_switch");
    try {
      map.mode = control_mode_from_string(detail::get<std::string>(ms, "mode"));
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      detail::schema_fail(e.what());
    }
    map.xy_gain = detail::get<double>(ms, "xy_gain");
    map.orient_gain = detail::get<double>(ms, "orient_gain");
    map.damping = detail::get<double>(ms, "damping");
    if (d != 2) throw FormatError(FormatErrc::shape_mismatch, "mode switching has d = 2");
    if (!ctx.obs.has_q()) detail::schema_fail("mode switching needs q in the observation");
    wf.map = std::move(map);
  } else {
    detail::schema_fail("unknown map kind '" + kind + "'");
  }
  const Json& fp = detail::field(j, "fingerprint");
  wf.fingerprint.seed = detail::get<unsigned long long>(fp, "seed");
  wf.fingerprint.epochs = detail::get<int>(fp, "epochs");
  wf.fingerprint.best_val_rmse = detail::get<double>(fp, "best_val_rmse");
  if (j.contains("config")) wf.config = j["config"];
  return wf;
}

inline void save_weights(const std::filesystem::path& path, const WeightFile& wf) {
  write_atomic(path, weights_to_json(wf).dump(1) + "\n");
}

inline WeightFile load_weights(const std::filesystem::path& path) {
  return weights_from_json(detail::parse_document(detail::read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Dataset files: a header line, then one line per tuple.

inline Json to_json(const DemoConfig& c) {
  return Json{{"target_line", {{c.line_start.x(), c.line_start.y()}, {c.line_end.x(), c.line_end.y()}}},
              {"n_targets", c.n_targets},
              {"kp", c.kp},
              {"damping", c.damping},
              {"dt", c.dt},
              {"max_steps", c.max_steps},
              {"stop_tol", c.stop_tol},
              {"q0", detail::vec_json(c.q0)},
              {"seed", c.seed}};
}

inline DemoConfig demo_config_from_json(const Json& j, int m) {
  DemoConfig c;
  const Json& line = detail::field(j, "target_line");
  try {
    c.line_start = {line.at(0).at(0).get<double>(), line.at(0).at(1).get<double>()};
    c.line_end = {line.at(1).at(0).get<double>(), line.at(1).at(1).get<double>()};
  } catch (const nlohmann::json::exception&) {
    detail::schema_fail("target_line must be two [x, y] points");
  }
  c.n_targets = detail::get<int>(j, "n_targets");
  c.kp = detail::get<double>(j, "kp");
  c.damping = detail::get<double>(j, "damping");
  c.dt = detail::get<double>(j, "dt");
  c.max_steps = detail::get<int>(j, "max_steps");
  c.stop_tol = detail::get<double>(j, "stop_tol");
  c.q0 = detail::vec(j, "q0", m);
  c.seed = detail::get<unsigned long long>(j, "seed");
  return c;
}

inline std::string dataset_to_text(const Dataset& ds, const Json& config = Json::object()) {
  ds.validate();
  const int m = ds.arm.dof();
  Json header;
  header["format"] = "sclmaps-dataset";
  header["format_version"] = kFormatVersion;
  header["arm"] = to_json(ds.arm);
  header["obs_spec"] = to_json(ds.obs, m);
  header["dt"] = ds.demo.dt;
  header["demo"] = to_json(ds.demo);
  long n_tuples = 0;
  std::map<std::string, long> per_split;
  Json trajs = Json::array();
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& t = ds.trajectories[i];
    n_tuples += t.steps();
    per_split[to_string(ds.splits[i])] += t.steps();
    trajs.push_back(Json{{"id", t.id},
                         {"split", to_string(ds.splits[i])},
                         {"target", {t.target.x(), t.target.y()}},
                         {"reached", t.reached},
                         {"steps", t.steps()},
                         {"q_final", detail::vec_json(t.q.back())}});
  }
  header["counts"] = Json{{"trajectories", ds.trajectories.size()},
                          {"tuples", n_tuples},
                          {"train", per_split["train"]},
                          {"val", per_split["val"]},
                          {"test", per_split["test"]}};
  header["trajectories"] = trajs;
  header["config"] = config;
  std::string out = header.dump() + "\n";
  for (const auto& t : ds.trajectories) {
    for (int s = 0; s < t.steps(); ++s) {
      out += Json{{"trajectory", t.id},
                  {"step", s},
                  {"obs", detail::vec_json(t.obs[s])},
                  {"q", detail::vec_json(t.q[s])},
                  {"qdot", detail::vec_json(t.qdot[s])}}
                 .dump();
      out += "\n";
    }
  }
  return out;
}

inline Dataset dataset_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw FormatError(FormatErrc::truncated, "dataset file has no header");
  }
  const Json header = detail::parse_document(line, "dataset header");
  detail::check_header(header, "sclmaps-dataset");
  Dataset ds;
  ds.arm = arm_from_json(detail::field(header, "arm"));
  const int m = ds.arm.dof();
  ds.obs = obs_spec_from_json(detail::field(header, "obs_spec"), m);
  ds.demo = demo_config_from_json(detail::field(header, "demo"), m);
  const int n_obs = ds.obs.dim(m);
  const Json& counts = detail::field(header, "counts");
  const long n_tuples = detail::get<long>(counts, "tuples");
  const Json& trajs = detail::field(header, "trajectories");
  if (!trajs.is_array()) detail::schema_fail("trajectories must be an array");
  if (static_cast<long>(trajs.size()) != detail::get<long>(counts, "trajectories")) {
    throw FormatError(FormatErrc::shape_mismatch, "trajectory count does not match header");
  }
  std::map<int, std::size_t> index;
  std::vector<int> expected_steps;
  long declared = 0;
  for (const auto& tj : trajs) {
    Trajectory t;
    t.id = detail::get<int>(tj, "id");
    if (index.count(t.id)) detail::schema_fail("duplicate trajectory id");
    try {
      ds.splits.push_back(split_from_string(detail::get<std::string>(tj, "split")));
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      detail::schema_fail(e.what());
    }
    const Vec target = detail::vec(tj, "target", 2);
    t.target = target;
    t.reached = detail::get<bool>(tj, "reached");
    const int steps = detail::get<int>(tj, "steps");
    if (steps < 0) throw FormatError(FormatErrc::shape_mismatch, "negative step count");
    declared += steps;
    expected_steps.push_back(steps);
    t.q.reserve(static_cast<std::size_t>(steps) + 1);
    t.q.resize(static_cast<std::size_t>(steps) + 1);
    t.q.back() = detail::vec(tj, "q_final", m);
    index[t.id] = ds.trajectories.size();
    ds.trajectories.push_back(std::move(t));
  }
  if (declared != n_tuples) throw FormatError(FormatErrc::shape_mismatch, "tuple count does not match trajectories");

  long read = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json rec = detail::parse_document(line, "dataset record " + std::to_string(read));
    const int id = detail::get<int>(rec, "trajectory");
    const int step = detail::get<int>(rec, "step");
    auto it = index.find(id);
    if (it == index.end()) detail::schema_fail("record refers to unknown trajectory " + std::to_string(id));
    Trajectory& t = ds.trajectories[it->second];
    if (step != t.steps()) {
      throw FormatError(FormatErrc::shape_mismatch,
                        "non-contiguous step index " + std::to_string(step) + " in trajectory " +
                            std::to_string(id));
    }
    if (step >= expected_steps[it->second]) {
      throw FormatError(FormatErrc::shape_mismatch, "trajectory " + std::to_string(id) + " has too many records");
    }
    t.obs.push_back(detail::vec(rec, "obs", n_obs));
    t.q[static_cast<std::size_t>(step)] = detail::vec(rec, "q", m);
    t.qdot.push_back(detail::vec(rec, "qdot", m));
    ++read;
  }
  if (read != n_tuples) {
    throw FormatError(FormatErrc::truncated, "dataset declares " + std::to_string(n_tuples) +
                                                 " tuples, file holds " + std::to_string(read));
  }
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    if (ds.trajectories[i].steps() != expected_steps[i]) {
      throw FormatError(FormatErrc::truncated, "trajectory " + std::to_string(ds.trajectories[i].id) + " is incomplete");
    }
  }
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds,
                         const Json& config = Json::object()) {
  write_atomic(path, dataset_to_text(ds, config));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_text(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Experiment records: a header line, then one object per trial keyed by column.
// NaN (did not converge / skipped) is written as null.

inline std::string records_to_text(const RecordTable& rec) {
  Json header{{"format", "sclmaps-records"},
              {"format_version", kFormatVersion},
              {"experiment", rec.experiment},
              {"map_kind", rec.map_kind},
              {"seed", rec.seed},
              {"dt", rec.dt},
              {"columns", rec.columns},
              {"rows", rec.rows.size()},
              {"config", rec.config}};
  std::string out = header.dump() + "\n";
  for (const auto& row : rec.rows) {
    Json j = Json::object();
    for (std::size_t k = 0; k < rec.columns.size(); ++k) {
      j[rec.columns[k]] = std::isfinite(row[k]) ? Json(row[k]) : Json(nullptr);
    }
    out += j.dump() + "\n";
  }
  return out;
}

inline RecordTable records_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrc::truncated, "records file has no header");
  const Json header = detail::parse_document(line, "records header");
  detail::check_header(header, "sclmaps-records");
  RecordTable rec;
  rec.experiment = detail::get<std::string>(header, "experiment");
  rec.map_kind = detail::get<std::string>(header, "map_kind");
  rec.seed = detail::get<unsigned long long>(header, "seed");
  rec.dt = detail::get<double>(header, "dt");
  rec.columns = detail::get<std::vector<std::string>>(header, "columns");
  rec.config = header.value("config", Json::object());
  const auto n = detail::get<long>(header, "rows");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = detail::parse_document(line, "record");
    std::vector<double> row;
    for (const auto& c : rec.columns) {
      const Json& v = detail::field(j, c.c_str());
      if (v.is_null()) {
        row.push_back(kDidNotConverge);
      } else if (v.is_number()) {
        row.push_back(v.get<double>());
      } else {
        detail::schema_fail("column '" + c + "' must be a number or null");
      }
    }
    rec.rows.push_back(std::move(row));
  }
  if (static_cast<long>(rec.rows.size()) != n) {
    throw FormatError(FormatErrc::truncated, "records header declares " + std::to_string(n) + " rows");
  }
  return rec;
}

inline void save_records(const std::filesystem::path& path, const RecordTable& rec) {
  write_atomic(path, records_to_text(rec));
}

inline RecordTable load_records(const std::filesystem::path& path) {
  return records_from_text(detail::read_file(path));
}

// Summary statistics of `columns`, grouped by the distinct values of `group_by`
// (or one group when empty).
inline Json summarize_records(const RecordTable& rec, const std::vector<std::string>& columns,
                              const std::string& group_by = "") {
  Json groups = Json::array();
  std::vector<double> keys;
  if (group_by.empty()) {
    keys.push_back(0.0);
  } else {
    std::set<double> distinct;
    for (double v : rec.column(group_by)) distinct.insert(v);
    keys.assign(distinct.begin(), distinct.end());
  }
  for (double key : keys) {
    const RecordTable sub = group_by.empty() ? rec : rec.where(group_by, key);
    Json g = Json::object();
    if (!group_by.empty()) g[group_by] = key;
    g["trials"] = sub.rows.size();
    Json stats = Json::object();
    for (const auto& c : columns) {
      const auto values = sub.column(c);
      bool any = false;
      for (double v : values) any = any || std::isfinite(v);
      stats[c] = any ? to_json(summarize(values)) : Json(nullptr);
    }
    g["stats"] = stats;
    groups.push_back(g);
  }
  return Json{{"format", "sclmaps-summary"},
              {"format_version", kFormatVersion},
              {"experiment", rec.experiment},
              {"map_kind", rec.map_kind},
              {"seed", rec.seed},
              {"dt", rec.dt},
              {"config", rec.config},
              {"group_by", group_by},
              {"groups", groups}};
}

}  // namespace sclmaps

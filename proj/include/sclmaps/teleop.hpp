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

// Per-connection teleoperation session. The session is a plain state machine:
// the transport feeds it text messages and calls tick() at the control rate.
// Message schemas: docs/protocol.md.

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sclmaps/maps.hpp"
#include "sclmaps/records.hpp"

namespace sclmaps {

struct TeleopTask {
  std::string id;
  JointState q0;
  std::vector<Eigen::Vector2d> targets;
  std::optional<std::pair<Eigen::Vector2d, Eigen::Vector2d>> line;

  // Target fed to target-dependent observation features.
  Eigen::Vector2d active_target() const {
    return targets.empty() ? Eigen::Vector2d::Zero() : targets.front();
  }
};

inline std::map<std::string, TeleopTask> default_tasks(const ArmModel& arm) {
  std::map<std::string, TeleopTask> tasks;
  JointState q0 = arm.dof() == 5 ? default_start_configuration() : JointState::Zero(arm.dof());
  const Eigen::Vector2d a{0.55, -0.45}, b{0.55, 0.45};
  tasks["reach"] = {"reach", q0, {{0.55, 0.0}}, std::nullopt};
  tasks["line"] = {"line", q0, {a, 0.5 * (a + b), b}, std::make_pair(a, b)};
  tasks["free"] = {"free", q0, {}, std::nullopt};
  return tasks;
}

struct SessionConfig {
  double rate = 40.0;        // Hz
  double speed_scale = 1.0;  // rad/s per unit action
  double max_action_norm = 1.0;

  double dt() const { return speed_scale / rate; }
  void validate() const {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw DataError("rate must be positive");
    if (!(speed_scale > 0.0) || !std::isfinite(speed_scale)) throw DataError("speed_scale must be positive");
    if (!(max_action_norm > 0.0)) throw DataError("max_action_norm must be positive");
  }
};

// Immutable catalogue shared by all sessions.
struct TeleopCatalog {
  ArmModel arm = ArmModel::planar_default();
  std::vector<std::pair<std::string, ActionMap>> maps;  // selection order
  std::map<std::string, TeleopTask> tasks;
  SessionConfig config;

  const ActionMap* find_map(const std::string& name) const {
    for (const auto& [n, m] : maps) {
      if (n == name) return &m;
    }
    return nullptr;
  }

  void validate() const {
    config.validate();
    if (maps.empty()) throw DataError("no maps to serve");
    if (tasks.empty()) throw DataError("no tasks defined");
    for (const auto& [name, map] : maps) {
      if (context(map).arm.link_lengths != arm.link_lengths) {
        throw DataError("map '" + name + "' was built for a different arm");
      }
      if (latent_dim(map) < 1) throw DataError("map '" + name + "' has no latent dimension");
    }
    for (const auto& [id, task] : tasks) {
      if (task.q0.size() != arm.dof()) throw DataError("task '" + id + "' q0 has the wrong size");
    }
  }
};

inline LatentAction clip_action(const LatentAction& a, double max_norm = 1.0) {
  const double n = a.norm();
  if (n > max_norm) return a * (max_norm / n);
  return a;
}

inline Json error_message(const std::string& code, const std::string& text) {
  return Json{{"type", "error"}, {"code", code}, {"text", text}};
}

class Session {
 public:
  Session(std::shared_ptr<const TeleopCatalog> catalog, const std::string& task_id)
      : catalog_(std::move(catalog)) {
    auto it = catalog_->tasks.find(task_id);
    if (it == catalog_->tasks.end()) throw DataError("unknown task '" + task_id + "'");
    task_ = it->second;
    select(catalog_->maps.front().first);
    q_ = task_.q0;
  }

  const JointState& q() const { return q_; }
  const LatentAction& held_action() const { return held_; }
  const std::string& map_name() const { return map_name_; }
  const ActionMap& map() const { return map_; }
  const TeleopTask& task() const { return task_; }
  long ticks() const { return ticks_; }
  double time() const { return ticks_ / catalog_->config.rate; }
  int mode_switches() const { return mode_switches_; }
  double dt() const { return catalog_->config.dt(); }

  std::optional<ControlMode> mode() const {
    if (const auto* ms = std::get_if<ModeSwitchMap>(&map_)) return ms->mode;
    return std::nullopt;
  }

  // Norm of the velocity commanded by a zero action at the current state.
  double drift() const {
    const Vec obs = observe();
    return decode(map_, obs, LatentAction::Zero(latent_dim(map_))).norm();
  }

  // Advances one control period and returns the outbound messages: a state
  // message, preceded by an error if decoding failed (the arm then freezes).
  std::vector<Json> tick() {
    std::vector<Json> out;
    const LatentAction a = clip_action(held_, catalog_->config.max_action_norm);
    double drift_now = 0.0;
    try {
      const Vec obs = observe();
      const JointVelocity qdot = decode(map_, obs, a);
      drift_now = decode(map_, obs, LatentAction::Zero(a.size())).norm();
      const JointState next = q_ + dt() * qdot;
      if (!next.allFinite()) throw NumericError("non-finite joint state");
      q_ = next;
    } catch (const std::exception& e) {
      held_.setZero();
      out.push_back(error_message("decode_failed", e.what()));
    }
    ++ticks_;
    out.push_back(state_message(clip_action(held_, catalog_->config.max_action_norm), drift_now));
    return out;
  }

  std::vector<Json> handle_message(const std::string& text) {
    Json msg;
    try {
      msg = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      return {error_message("bad_json", e.what())};
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      return {error_message("bad_message", "message must be an object with a string 'type'")};
    }
    const std::string type = msg["type"];
    try {
      if (type == "action") return on_action(msg);
      if (type == "select_map") return on_select_map(msg);
      if (type == "set_mode") return on_set_mode(msg);
      if (type == "reset") return on_reset();
      if (type == "set_task") return on_set_task(msg);
    } catch (const nlohmann::json::exception& e) {
      return {error_message("bad_message", e.what())};
    }
    return {error_message("unknown_type", "unknown message type '" + type + "'")};
  }

  Json maps_message() const {
    Json names = Json::array();
    for (const auto& [n, m] : catalog_->maps) {
      names.push_back(Json{{"name", n}, {"kind", map_kind(m)}, {"d", latent_dim(m)}});
    }
    Json targets = Json::array();
    for (const auto& t : task_.targets) targets.push_back({t.x(), t.y()});
    Json task{{"id", task_.id}, {"targets", targets}, {"line", nullptr}};
    if (task_.line) {
      task["line"] = {{task_.line->first.x(), task_.line->first.y()},
                      {task_.line->second.x(), task_.line->second.y()}};
    }
    Json tasks = Json::array();
    for (const auto& [id, t] : catalog_->tasks) tasks.push_back(id);
    return Json{{"type", "maps"},
                {"maps", names},
                {"selected", map_name_},
                {"task", task},
                {"tasks", tasks},
                {"links", catalog_->arm.link_lengths},
                {"rate", catalog_->config.rate}};
  }

  Json summary_message() const {
    return Json{{"type", "summary"},
                {"task", task_.id},
                {"map", map_name_},
                {"ticks", ticks_},
                {"t", time()},
                {"mode_switches", mode_switches_}};
  }

 private:
  Vec observe() const { return context(map_).observe(q_, task_.active_target()); }

  Json state_message(const LatentAction& applied, double drift_now) const {
    const EePose ee = forward_kinematics(catalog_->arm, q_);
    const auto m = mode();
    return Json{{"type", "state"},
                {"q", std::vector<double>(q_.begin(), q_.end())},
                {"ee", {ee.x, ee.y, ee.phi}},
                {"t", time()},
                {"tick", ticks_},
                {"map", map_name_},
                {"mode", m ? Json(to_string(*m)) : Json(nullptr)},
                {"drift", drift_now},
                {"action", std::vector<double>(applied.begin(), applied.end())},
                {"mode_switches", mode_switches_}};
  }

  void select(const std::string& name) {
    const ActionMap* m = catalog_->find_map(name);
    if (!m) throw DataError("unknown map '" + name + "'");
    map_ = *m;
    map_name_ = name;
    held_ = LatentAction::Zero(latent_dim(map_));
  }

  std::vector<Json> on_action(const Json& msg) {
    const Json& a = msg.at("a");
    if (!a.is_array()) return {error_message("bad_action", "'a' must be an array")};
    const auto d = static_cast<std::size_t>(latent_dim(map_));
    if (a.size() != d) {
      return {error_message("bad_action", "map '" + map_name_ + "' takes " + std::to_string(d) +
                                              " action components, got " + std::to_string(a.size()))};
    }
    LatentAction next(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      if (!a[i].is_number()) return {error_message("bad_action", "action components must be numbers")};
      next[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    }
    if (!next.allFinite()) return {error_message("bad_action", "action must be finite")};
    held_ = next;
    return {};
  }

  std::vector<Json> on_select_map(const Json& msg) {
    const std::string name = msg.at("name").get<std::string>();
    if (!catalog_->find_map(name)) return {error_message("unknown_map", "no map named '" + name + "'")};
    select(name);
    return {};
  }

  std::vector<Json> on_set_mode(const Json& msg) {
    auto* ms = std::get_if<ModeSwitchMap>(&map_);
    if (!ms) {
      return {error_message("not_mode_switch", "map '" + map_name_ + "' has no control modes")};
    }
    try {
      ms->mode = control_mode_from_string(msg.at("mode").get<std::string>());
    } catch (const DataError& e) {
      return {error_message("bad_mode", e.what())};
    }
    ++mode_switches_;
    return {};
  }

  std::vector<Json> on_reset() {
    q_ = task_.q0;
    held_.setZero();
    return {};
  }

  std::vector<Json> on_set_task(const Json& msg) {
    const std::string id = msg.at("task").get<std::string>();
    auto it = catalog_->tasks.find(id);
    if (it == catalog_->tasks.end()) return {error_message("unknown_task", "no task '" + id + "'")};
    task_ = it->second;
    q_ = task_.q0;
    held_.setZero();
    return {maps_message()};
  }

  std::shared_ptr<const TeleopCatalog> catalog_;
  TeleopTask task_;
  ActionMap map_;
  std::string map_name_;
  JointState q_;
  LatentAction held_;
  long ticks_ = 0;
  int mode_switches_ = 0;
};

}  // namespace sclmaps

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

// Per-trial experiment tables and their summary statistics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "sclmaps/error.hpp"

namespace sclmaps {

using Json = nlohmann::ordered_json;

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n = 1
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  long n = 0;
};

namespace detail {

// Linear interpolation between closest ranks on sorted data.
inline double quantile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

// Non-finite entries (did-not-converge markers) are excluded.
inline SummaryStats summarize(const std::vector<double>& values) {
  std::vector<double> s;
  s.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) s.push_back(v);
  }
  if (s.empty()) throw DataError("summary of an empty sample");
  std::sort(s.begin(), s.end());
  SummaryStats st;
  st.n = static_cast<long>(s.size());
  double sum = 0.0;
  for (double v : s) sum += v;
  st.mean = sum / static_cast<double>(st.n);
  if (st.n > 1) {
    double ss = 0.0;
    for (double v : s) ss += (v - st.mean) * (v - st.mean);
    st.std = std::sqrt(ss / static_cast<double>(st.n - 1));
  }
  st.median = detail::quantile_sorted(s, 0.5);
  st.q25 = detail::quantile_sorted(s, 0.25);
  st.q75 = detail::quantile_sorted(s, 0.75);
  return st;
}

inline Json to_json(const SummaryStats& s) {
  return Json{{"mean", s.mean}, {"std", s.std}, {"median", s.median},
              {"q25", s.q25},   {"q75", s.q75}, {"n", s.n}};
}

// One experiment's raw trials: fixed named columns, one row per trial.
struct RecordTable {
  std::string experiment;
  std::string map_kind;
  unsigned long long seed = 0;
  double dt = 1.0;
  Json config = Json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DataError("no column '" + name + "' in " + experiment);
    return static_cast<std::size_t>(it - columns.begin());
  }

  std::vector<double> column(const std::string& name) const {
    const auto k = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }

  void add_row(std::vector<double> row) {
    if (row.size() != columns.size()) throw DimensionError("record row width");
    rows.push_back(std::move(row));
  }

  // Rows whose `key` column equals `value`.
  RecordTable where(const std::string& key, double value) const {
    RecordTable out = *this;
    out.rows.clear();
    const auto k = column_index(key);
    for (const auto& r : rows) {
      if (r[k] == value) out.rows.push_back(r);
    }
    return out;
  }
};

inline constexpr double kDidNotConverge = std::numeric_limits<double>::quiet_NaN();

}  // namespace sclmaps

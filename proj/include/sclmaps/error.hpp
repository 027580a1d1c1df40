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

#include <stdexcept>
#include <string>

namespace sclmaps {

// Process exit codes used by the command-line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

// Shapes of vectors/matrices passed to an operation do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration or input data (unreachable target, too few trajectories, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular systems, rank deficiency, non-finite losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError("dimension mismatch: " + what);
}

}  // namespace sclmaps

// Copyright 2026 The m3ddm-plus Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace m3ddm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable that replaces the built-in default seed (0). An explicit
/// --seed flag or config key still wins.
inline constexpr char kSeedEnv[] = "M3DDM_SEED";

/// One per command invocation, written beside the outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> checkpoints;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::string version;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

std::string artifact_version();

/// Entry point shared by the executable and the tests. Never exits the process;
/// returns 0 on success, 1 on runtime failure, 2 on usage/config failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace m3ddm

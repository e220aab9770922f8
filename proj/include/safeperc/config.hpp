// Copyright 2026 The safeperc Authors
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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "safeperc/episode.hpp"
#include "safeperc/evaluation.hpp"
#include "safeperc/perception.hpp"
#include "safeperc/trainer.hpp"

namespace safeperc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  bool hidden_layer = false;
  int hidden_width = 32;
  double init_scale = 0.01;
  bool operator==(const ModelConfig&) const = default;
};

struct PathsConfig {
  std::string init_checkpoint;  // empty: random init + warm start
  std::string log_dir = "runs";
  bool operator==(const PathsConfig&) const = default;
};

// Everything a run needs. Per-module seeds are not stored: they all derive
// from `seed` (see the accessors below).
struct RunConfig {
  std::uint64_t seed = 7;
  int workers = 1;
  int n_slots = 8;
  ScenarioConfig scenario;
  VehicleParams vehicle;
  NoiseModel noise;
  Vocabulary vocab;
  ModelConfig model;
  TrainConfig train;
  RewardConfig reward;
  PretrainConfig pretrain;
  EvalConfig eval;
  PathsConfig paths;

  // Throws ConfigError naming the offending section.
  void validate() const;

  Architecture architecture() const;
  EpisodeSettings episode_settings() const;
  TrainConfig train_config() const;
  PretrainConfig pretrain_config() const;
  EvalConfig eval_config() const;
  // Scenario seeds consumed by training and warm start.
  std::vector<std::uint64_t> training_seeds() const;

  bool operator==(const RunConfig&) const = default;
};

inline constexpr std::uint64_t kPretrainSeedOffset = 100'000;
inline constexpr std::uint64_t kEvalSeedOffset = 1'000'000;
inline constexpr std::uint64_t kInitStream = 5;

nlohmann::json config_to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);

// "section.key=value"; the value is parsed as JSON when possible and as a
// bare string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
std::string dump_config(const RunConfig& cfg);

// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace safeperc

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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "safeperc/episode.hpp"
#include "safeperc/rulebook.hpp"

namespace safeperc {

struct EvalConfig {
  std::vector<double> fog_levels = {0.0, 20.0, 40.0, 60.0};
  int episodes = 50;
  // Episode e of every fog level uses seed_base + e, so cells at different
  // fog levels share scenarios.
  std::uint64_t seed_base = 1'000'000;
  double match_threshold = 0.5;
  int workers = 1;

  void validate() const;
  std::uint64_t episode_seed(int e) const { return seed_base + static_cast<std::uint64_t>(e); }
  bool operator==(const EvalConfig&) const = default;
};

// Counts over (step, in-range ground-truth object) pairs.
struct AccuracyCounts {
  std::size_t prioritized_total = 0;
  std::size_t prioritized_correct = 0;
  std::size_t other_total = 0;
  std::size_t other_correct = 0;

  AccuracyCounts& operator+=(const AccuracyCounts& o);
  // Absent when the denominator is zero.
  std::optional<double> prioritized() const;
  std::optional<double> non_prioritized() const;
  std::optional<double> overall() const;
};

AccuracyCounts prioritized_accuracy(const TrajectoryRecord& record, const VehicleParams& params,
                                    const NoiseModel& noise, double match_threshold);
AccuracyCounts prioritized_accuracy(const std::vector<TrajectoryRecord>& records,
                                    const VehicleParams& params, const NoiseModel& noise,
                                    double match_threshold);

struct EvalCell {
  std::string variant;
  double fog = 0.0;
  ViolationVector totals = ViolationVector::Zero();
  int episodes = 0;
  AccuracyCounts accuracy;

  double grand_total() const { return totals.sum(); }
};

struct EvalReport {
  std::vector<EvalCell> cells;

  const EvalCell* find(const std::string& variant, double fog) const;
  void append(const EvalReport& other);
};

// Rolls `cfg.episodes` episodes per fog level with `perception` and reduces
// them in episode order. Policy detectors should be in argmax mode.
EvalReport evaluate(const Perception& perception, const std::string& variant,
                    const EpisodeSettings& base, const EvalConfig& cfg);

// True when no evaluation seed is also a training or pretraining seed.
bool seeds_disjoint(const EvalConfig& eval, const std::vector<std::uint64_t>& used);

void write_report_csv(std::ostream& out, const EvalReport& report);
void print_report_table(std::ostream& out, const EvalReport& report);

}  // namespace safeperc

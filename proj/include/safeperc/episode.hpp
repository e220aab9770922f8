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
#include <memory>
#include <vector>

#include "safeperc/controller.hpp"
#include "safeperc/perception.hpp"
#include "safeperc/rulebook.hpp"
#include "safeperc/simulator.hpp"

namespace safeperc {

// A perception component: maps a sensor frame to detections. `world` gives
// the ego pose for decoding; only the ground-truth stub reads its objects.
class Perception {
 public:
  virtual ~Perception() = default;
  virtual DetectionSequence detect(const SensorFrame& frame, const WorldState& world,
                                   Rng& rng) const = 0;
};

// Reports every in-range ground-truth object exactly (probability one).
class GroundTruthPerception final : public Perception {
 public:
  GroundTruthPerception(const VehicleParams& params, const NoiseModel& noise,
                        Vocabulary vocab = {})
      : params_(params), noise_(noise), vocab_(vocab) {}
  DetectionSequence detect(const SensorFrame& frame, const WorldState& world,
                           Rng& rng) const override;

 private:
  VehicleParams params_;
  NoiseModel noise_;
  Vocabulary vocab_;
};

// Reports nothing.
class BlindPerception final : public Perception {
 public:
  DetectionSequence detect(const SensorFrame& frame, const WorldState& world,
                           Rng& rng) const override;
};

// The learned detector; samples tokens during training, decodes greedily
// in evaluation.
class PolicyPerception final : public Perception {
 public:
  enum class Mode { kSample, kArgmax };
  PolicyPerception(const PolicyParams& theta, Mode mode, double ego_length)
      : theta_(&theta), mode_(mode), ego_length_(ego_length) {}
  DetectionSequence detect(const SensorFrame& frame, const WorldState& world,
                           Rng& rng) const override;

 private:
  const PolicyParams* theta_;
  Mode mode_;
  double ego_length_;
};

struct StepRecord {
  WorldState world;  // x_t, with ego.accel = the command applied at t
  SensorFrame frame;
  DetectionSequence detections;
  ControlCommand command;
  ViolationVector violations = ViolationVector::Zero();
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  double fog = 0.0;
  int n_slots = 0;
  std::vector<StepRecord> steps;

  Realization realization() const;
  std::vector<ViolationVector> per_state_violations() const;
  ViolationVector totals() const;
};

struct EpisodeSettings {
  ScenarioConfig scenario;
  VehicleParams params;
  NoiseModel noise;
  int n_slots = 8;
  // Varies the detector's sampling stream without changing the scenario.
  std::uint64_t policy_salt = 0;
};

// Sense -> detect -> control -> record x_t -> step -> score, repeated for
// scenario.horizon steps.
TrajectoryRecord run_episode(const EpisodeSettings& settings, const Perception& perception);
TrajectoryRecord run_episode(const EpisodeSettings& settings, Scenario initial,
                             const Perception& perception);

class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Rolls `initial` forward with ground-truth perception and returns the
// realized violation totals. Throws PreconditionError when the initial state
// is not compliant or object dynamics break the assumptions behind the guarantee.
ViolationVector closed_loop_check(const Scenario& initial, int horizon,
                                  const EpisodeSettings& settings);

}  // namespace safeperc

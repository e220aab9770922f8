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

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "safeperc/controller.hpp"
#include "safeperc/domain.hpp"

namespace safeperc {

using Rng = std::mt19937_64;

// Independent, reproducible random streams derived from one seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

enum class Behavior : std::uint8_t { kConstantSpeed = 0, kRandomBrake = 1, kStationary = 2 };

const char* to_string(Behavior b);

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int n_lanes = 3;
  int n_objects = 6;
  double pedestrian_fraction = 0.2;
  double fog = 0.0;  // [0, 100]
  int horizon = 100;
  double dt = 0.1;
  // Probabilities over {ConstantSpeed, RandomBrake, Stationary} for vehicles.
  std::array<double, 3> behavior_mix = {0.5, 0.3, 0.2};
  // Place the ego-lane objects so the ground-truth closed loop starts (and,
  // with the reference controller, stays) rule compliant.
  bool compliant_start = true;
  int spawn_retries = 200;
  double pedestrian_depth = 0.5;
  double vehicle_depth = 4.5;
  // Vehicles brake at most this hard; must be >= a_brake.
  double object_max_brake = 8.0;
  double random_brake_start_prob = 0.03;

  void validate() const;
  bool operator==(const ScenarioConfig&) const = default;
};

// Per-object dynamics. RandomBrake objects decelerate in episodes at a rate
// never exceeding their declared max_brake.
struct ObjectBehavior {
  Behavior kind = Behavior::kConstantSpeed;
  int brake_steps_left = 0;
  double brake_rate = 0.0;
};

struct Scenario {
  WorldState world;
  std::vector<ObjectBehavior> behaviors;  // parallel to world.objects
};

// Deterministic in config.seed. Throws std::runtime_error when a compliant
// layout cannot be found within config.spawn_retries attempts.
Scenario spawn(const ScenarioConfig& config, const VehicleParams& params);

// One kinematic step under constant acceleration u; speed never goes
// negative (the vehicle stops mid-step instead of reversing).
EgoState integrate_ego(const EgoState& ego, double u, double dt);

struct NoiseModel {
  double sigma_gap0 = 0.4;
  double sigma_speed0 = 0.3;
  double sigma_lane0 = 0.05;
  double sigma_class0 = 0.15;
  double miss0 = 0.02;
  double fog_sigma_scale = 20.0;  // sigma * (1 + fog / fog_sigma_scale)
  double fog_miss_scale = 100.0;  // miss0 + fog / fog_miss_scale
  double miss_cap = 0.9;
  // Return strength of real objects and clutter; fog attenuates real returns
  // by 1 / (1 + fog / fog_intensity_scale).
  double intensity_real = 1.0;
  double intensity_clutter = 0.3;
  double sigma_intensity = 0.45;
  double fog_intensity_scale = 20.0;
  double clutter_rate = 0.25;
  int max_clutter = 3;
  double sensor_range = 128.0;

  void validate() const;
  double sigma_scale(double fog) const { return 1.0 + fog / fog_sigma_scale; }
  double miss_probability(double fog) const;
  double intensity_attenuation(double fog) const {
    return 1.0 / (1.0 + fog / fog_intensity_scale);
  }
  bool operator==(const NoiseModel&) const = default;
};

struct SensorReading {
  double gap = 0.0;
  double speed = 0.0;
  double lane_offset = 0.0;
  double class_evidence = 0.0;  // ~1 vehicle, ~0 pedestrian
  double intensity = 0.0;
  bool operator==(const SensorReading&) const = default;
};

// What produced a slot's reading; annotation only, never shown to the
// detector.
inline constexpr int kClutterSource = -1;
inline constexpr int kEmptySource = -2;

struct SensorFrame {
  std::vector<std::optional<SensorReading>> slots;
  std::vector<int> sources;  // object id, kClutterSource or kEmptySource
  double fog = 0.0;
  bool operator==(const SensorFrame&) const = default;
};

// True when the object is ahead of the ego and within sensor range.
bool in_sensor_range(const EgoState& ego, const SceneObject& obj,
                     const NoiseModel& noise, double ego_length);

SensorFrame sense(const WorldState& world, const NoiseModel& noise, double fog,
                  int n_slots, double ego_length, Rng& rng);

class Simulator {
 public:
  Simulator(Scenario scenario, const ScenarioConfig& config,
            const VehicleParams& params, const NoiseModel& noise);

  const WorldState& world() const { return scenario_.world; }
  const Scenario& scenario() const { return scenario_; }

  SensorFrame sense(int n_slots);
  void step(ControlCommand u);

 private:
  Scenario scenario_;
  ScenarioConfig config_;
  VehicleParams params_;
  NoiseModel noise_;
  Rng world_rng_;
  Rng sensor_rng_;
};

}  // namespace safeperc

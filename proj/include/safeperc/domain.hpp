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

namespace safeperc {

// Raised when a value object is constructed or loaded with parameters that
// break its invariants.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ObjectKind : std::uint8_t { kVehicle = 0, kPedestrian = 1 };

const char* to_string(ObjectKind kind);
ObjectKind object_kind_from_string(const std::string& name);

// One environment object in the longitudinal world. `position` is the
// longitudinal coordinate of the object's center along its lane.
struct SceneObject {
  int id = 0;
  ObjectKind kind = ObjectKind::kVehicle;
  int lane = 0;
  double position = 0.0;
  double width = 2.0;
  double height = 1.8;
  double depth = 4.5;
  double speed = 0.0;      // signed, positive = ego direction
  double max_brake = 8.0;  // a_brake,i

  bool operator==(const SceneObject&) const = default;
};

struct EgoState {
  double position = 0.0;
  int lane = 0;
  double speed = 0.0;
  double accel = 0.0;
  double heading = 0.0;

  bool operator==(const EgoState&) const = default;
};

// Ego state plus the ground-truth environment at one instant.
struct WorldState {
  double time = 0.0;
  EgoState ego;
  std::vector<SceneObject> objects;

  bool operator==(const WorldState&) const = default;
};

// An ordered sequence of world states spaced by the simulation step.
struct Realization {
  std::vector<WorldState> states;

  bool empty() const { return states.empty(); }
  std::size_t size() const { return states.size(); }
};

struct VehicleParams {
  double a_max = 3.0;           // max acceleration
  double a_min = 6.0;           // max braking allowed (positive magnitude)
  double a_brake = 4.0;         // comfortable braking
  double v_lim = 15.0;          // speed limit
  double dt = 0.1;              // control / simulation step
  double tau = 0.5;             // time buffer
  double epsilon = 0.1;         // collision gap
  double progress_ratio = 0.8;  // r in the progress rule
  double ego_length = 4.0;

  // Throws InvariantError when a_min >= a_brake > 0, tau >= dt or
  // 0 < progress_ratio <= 1 fails.
  void validate() const;

  bool operator==(const VehicleParams&) const = default;
};

// The vehicle/pedestrian clearance formulas branch on this: pedestrians and
// objects moving against the ego use the full-stopping-distance branch.
inline bool uses_stopping_branch(const SceneObject& obj) {
  return obj.kind == ObjectKind::kPedestrian || obj.speed < 0.0;
}

// True when `obj` is in the ego lane and strictly ahead of the ego center.
inline bool is_prioritized(const EgoState& ego, const SceneObject& obj) {
  return obj.lane == ego.lane && obj.position > ego.position;
}

// Bumper-to-bumper distance from the ego front to the object's rear,
// clamped at zero.
double gap(const EgoState& ego, const SceneObject& obj, double ego_length);

// Objects in the ego lane and ahead of it, sorted by ascending gap (ties by
// id so the order is total).
std::vector<SceneObject> prioritized_set(const WorldState& world,
                                         double ego_length);
std::vector<SceneObject> prioritized_set(const EgoState& ego,
                                         const std::vector<SceneObject>& objects,
                                         double ego_length);

}  // namespace safeperc

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

#include "safeperc/domain.hpp"

#include <algorithm>

namespace safeperc {

const char* to_string(ObjectKind kind) {
  return kind == ObjectKind::kVehicle ? "vehicle" : "pedestrian";
}

ObjectKind object_kind_from_string(const std::string& name) {
  if (name == "vehicle") return ObjectKind::kVehicle;
  if (name == "pedestrian") return ObjectKind::kPedestrian;
  throw InvariantError("unknown object kind '" + name + "'");
}

void VehicleParams::validate() const {
  if (!(a_brake > 0.0)) throw InvariantError("a_brake must be > 0");
  if (!(a_min >= a_brake)) throw InvariantError("a_min must be >= a_brake");
  if (!(a_max > 0.0)) throw InvariantError("a_max must be > 0");
  if (!(v_lim > 0.0)) throw InvariantError("v_lim must be > 0");
  if (!(dt > 0.0)) throw InvariantError("dt must be > 0");
  if (!(tau >= dt)) throw InvariantError("tau must be >= dt");
  if (!(epsilon >= 0.0)) throw InvariantError("epsilon must be >= 0");
  if (!(progress_ratio > 0.0 && progress_ratio <= 1.0))
    throw InvariantError("progress_ratio must lie in (0, 1]");
  if (!(ego_length > 0.0)) throw InvariantError("ego_length must be > 0");
}

double gap(const EgoState& ego, const SceneObject& obj, double ego_length) {
  const double rear = obj.position - 0.5 * obj.depth;
  const double front = ego.position + 0.5 * ego_length;
  return std::max(0.0, rear - front);
}

std::vector<SceneObject> prioritized_set(const EgoState& ego,
                                         const std::vector<SceneObject>& objects,
                                         double ego_length) {
  std::vector<SceneObject> out;
  for (const auto& obj : objects) {
    if (is_prioritized(ego, obj)) out.push_back(obj);
  }
  std::stable_sort(out.begin(), out.end(),
                   [&](const SceneObject& a, const SceneObject& b) {
                     const double ga = gap(ego, a, ego_length);
                     const double gb = gap(ego, b, ego_length);
                     if (ga != gb) return ga < gb;
                     if (a.position != b.position) return a.position < b.position;
                     return a.id < b.id;
                   });
  return out;
}

std::vector<SceneObject> prioritized_set(const WorldState& world,
                                         double ego_length) {
  return prioritized_set(world.ego, world.objects, ego_length);
}

}  // namespace safeperc

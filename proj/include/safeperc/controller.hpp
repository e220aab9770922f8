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

#include <span>
#include <vector>

#include "safeperc/domain.hpp"
#include "safeperc/rulebook.hpp"

namespace safeperc {

struct ControlCommand {
  double accel = 0.0;  // in [-a_min, a_max]
  bool operator==(const ControlCommand&) const = default;
};

enum class CtrlBranch { kEmptyRoad, kOverspeed, kFollowing };

// Which controller branch fires, in listed order: empty road, overspeed,
// following. `perceived` is the full detected environment; O is derived
// from it.
CtrlBranch select_branch(std::span<const SceneObject> perceived,
                         const EgoState& sys, const VehicleParams& params);

// RSS-style longitudinal controller. `probs` is accepted for interface
// parity with a probabilistic detector and is not used.
ControlCommand ctrl(std::span<const SceneObject> perceived,
                    std::span<const double> probs, const EgoState& sys,
                    const VehicleParams& params);

inline ControlCommand ctrl(const std::vector<SceneObject>& perceived,
                           const EgoState& sys, const VehicleParams& params) {
  return ctrl(std::span<const SceneObject>(perceived), {}, sys, params);
}

}  // namespace safeperc

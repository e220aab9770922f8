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

#include "safeperc/controller.hpp"

#include <algorithm>

namespace safeperc {

CtrlBranch select_branch(std::span<const SceneObject> perceived,
                         const EgoState& sys, const VehicleParams& params) {
  const bool any_ahead = std::any_of(
      perceived.begin(), perceived.end(),
      [&](const SceneObject& o) { return is_prioritized(sys, o); });
  if (!any_ahead) return CtrlBranch::kEmptyRoad;
  if (sys.speed > params.v_lim) return CtrlBranch::kOverspeed;
  return CtrlBranch::kFollowing;
}

ControlCommand ctrl(std::span<const SceneObject> perceived,
                    std::span<const double> /*probs*/, const EgoState& sys,
                    const VehicleParams& params) {
  double accel = 0.0;
  switch (select_branch(perceived, sys, params)) {
    case CtrlBranch::kEmptyRoad:
      accel = std::min(params.a_max, (params.v_lim - sys.speed) / params.dt);
      break;
    case CtrlBranch::kOverspeed:
      accel = -params.a_min;
      break;
    case CtrlBranch::kFollowing: {
      std::vector<SceneObject> ahead;
      for (const auto& o : perceived) {
        if (is_prioritized(sys, o)) ahead.push_back(o);
      }
      const double v_max = max_permissible_speed(ahead, sys, params).value();
      accel = std::min(params.a_max,
                       (v_max - params.a_brake * params.dt - sys.speed) / params.dt);
      break;
    }
  }
  return ControlCommand{std::clamp(accel, -params.a_min, params.a_max)};
}

}  // namespace safeperc

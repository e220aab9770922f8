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

// Hand-built world states for the oracle comparison. The ego sits at the
// origin with length 4, so a depth-4 vehicle at position p has gap p - 4 and
// a pedestrian (depth 0.5) at p has gap p - 2.25. Values are chosen so that
// summation order cannot change the last bit.

#include <string>
#include <vector>

#include "../support.hpp"
#include "rulebook_oracle.hpp"

namespace oracle {

struct Case {
  std::string name;
  safeperc::WorldState world;
  safeperc::VehicleParams params;
};

inline std::vector<Case> handcrafted_cases() {
  using namespace testing_support;
  const safeperc::VehicleParams d;
  std::vector<Case> c;

  // Empty O: target from the speed limit.
  c.push_back({"empty road, full throttle", world(ego(0, 10, 3)), d});
  c.push_back({"empty road, braking", world(ego(0, 10, -2)), d});
  c.push_back({"empty road, gentle accel", world(ego(0, 10, 1)), d});
  c.push_back({"empty road at the limit", world(ego(0, 15, 0)), d});
  c.push_back({"empty road above the limit", world(ego(0, 16, -6)), d});
  c.push_back({"empty road, target below floor", world(ego(0, 15.0 - 1e-11, -1)), d});
  c.push_back({"only other lanes and behind",
               world(ego(0, 8, -2), {vehicle(1, 1, 10, 5), pedestrian(2, 2, 6),
                                     vehicle(3, 0, -12, 9), vehicle(4, 0, 0, 3)}),
               d});

  // Vehicle clearance branch.
  c.push_back({"lead beyond buffer, accelerating",
               world(ego(0, 10, 1), {vehicle(1, 0, 54, 10)}), d});
  c.push_back({"lead beyond buffer, braking",
               world(ego(0, 10, -1), {vehicle(1, 0, 54, 10)}), d});
  c.push_back({"lead inside buffer, braking justified",
               world(ego(0, 10, -3), {vehicle(1, 0, 14, 10)}), d});
  {
    safeperc::WorldState w = world(ego(0, 20, 0), {vehicle(1, 0, 34, 10, 5)});
    c.push_back({"clearance deficit of ten", w, d});
  }
  c.push_back({"faster lead clamps clearance to zero",
               world(ego(0, 5, 0.5), {vehicle(1, 0, 5, 20)}), d});
  c.push_back({"stationary vehicle, collision",
               world(ego(0, 10, -6), {vehicle(1, 0, 4.0625, 0)}), d});

  // Stopping branch: pedestrians and oncoming vehicles.
  c.push_back({"pedestrian inside clearance",
               world(ego(0, 10, 0), {pedestrian(1, 0, 12.25)}), d});
  c.push_back({"pedestrian exactly at clearance",
               world(ego(0, 4, 0), {pedestrian(1, 0, 4.25)}), d});
  c.push_back({"oncoming vehicle beyond buffer",
               world(ego(0, 10, 2), {vehicle(1, 0, 24, -2)}), d});
  c.push_back({"oncoming vehicle close",
               world(ego(0, 10, -4), {vehicle(1, 0, 10, -2)}), d});

  // Several objects at once.
  c.push_back({"two collisions",
               world(ego(0, 5, -6), {vehicle(1, 0, 4, 0), pedestrian(2, 0, 2.25)}), d});
  c.push_back({"one clear, one not",
               world(ego(0, 10, -2), {vehicle(1, 0, 80, 10), pedestrian(2, 0, 20.25)}), d});
  c.push_back({"all clear, mixed kinds",
               world(ego(0, 6, 0.5),
                     {vehicle(1, 0, 60, 12), pedestrian(2, 0, 40.25), vehicle(3, 1, 5, 0)}),
               d});
  c.push_back({"overlapping object (gap clamped)",
               world(ego(0, 3, 0), {vehicle(1, 0, 2, 0)}), d});

  // Non-default parameters.
  {
    safeperc::VehicleParams p;
    p.a_brake = 2.0;
    p.a_min = 5.0;
    p.tau = 1.0;
    p.epsilon = 0.5;
    p.progress_ratio = 0.5;
    c.push_back({"custom params, collision band",
                 world(ego(0, 4, 0), {vehicle(1, 0, 4.25, 1, 4)}), p});
    c.push_back({"custom params, clear road",
                 world(ego(0, 4, 0.25), {vehicle(1, 0, 40, 4, 4)}), p});
  }
  return c;
}

// Which formula branches a case exercises, derived from the state alone.
struct Coverage {
  bool empty_o = false, nonempty_o = false;
  bool vehicle_clearance = false, stopping_clearance = false;
  bool rb3_vacuous = false;
  bool target_empty = false, target_clear = false, target_zero = false;
};

inline Coverage coverage(const safeperc::WorldState& w, const safeperc::VehicleParams& p) {
  Coverage cov;
  bool any = false, all_far = true;
  for (const auto& o : w.objects) {
    if (!(o.lane == w.ego.lane && o.position > w.ego.position)) continue;
    any = true;
    const bool stop = o.kind == safeperc::ObjectKind::kPedestrian || o.speed < 0.0;
    (stop ? cov.stopping_clearance : cov.vehicle_clearance) = true;
    double d = (o.position - o.depth / 2.0) - (w.ego.position + p.ego_length / 2.0);
    if (d < 0.0) d = 0.0;
    double cl = w.ego.speed * w.ego.speed / (2.0 * p.a_brake);
    if (!stop) {
      cl -= o.speed * o.speed / (2.0 * o.max_brake);
      if (cl < 0.0) cl = 0.0;
    }
    if (!(d > cl + w.ego.speed * p.tau + 0.5 * p.a_brake * p.tau * p.tau)) all_far = false;
  }
  cov.empty_o = !any;
  cov.nonempty_o = any;
  cov.rb3_vacuous = !any && w.ego.accel < 0.0;
  cov.target_empty = !any;
  cov.target_clear = any && all_far;
  cov.target_zero = any && !all_far;
  return cov;
}

}  // namespace oracle

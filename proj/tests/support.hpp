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

// Small builders shared by the test binaries.

#include <cstdint>
#include <random>
#include <vector>

#include "safeperc/domain.hpp"
#include "safeperc/episode.hpp"
#include "safeperc/trainer.hpp"

namespace testing_support {

using safeperc::EgoState;
using safeperc::ObjectKind;
using safeperc::SceneObject;
using safeperc::WorldState;

inline SceneObject vehicle(int id, int lane, double position, double speed,
                           double max_brake = 8.0, double depth = 4.0) {
  SceneObject o;
  o.id = id;
  o.kind = ObjectKind::kVehicle;
  o.lane = lane;
  o.position = position;
  o.speed = speed;
  o.max_brake = max_brake;
  o.depth = depth;
  return o;
}

inline SceneObject pedestrian(int id, int lane, double position, double speed = 0.0) {
  SceneObject o;
  o.id = id;
  o.kind = ObjectKind::kPedestrian;
  o.lane = lane;
  o.position = position;
  o.speed = speed;
  o.width = 0.5;
  o.height = 1.8;
  o.depth = 0.5;
  o.max_brake = 8.0;
  return o;
}

inline EgoState ego(double position, double speed, double accel = 0.0, int lane = 0) {
  EgoState e;
  e.position = position;
  e.speed = speed;
  e.accel = accel;
  e.lane = lane;
  return e;
}

inline WorldState world(EgoState e, std::vector<SceneObject> objects = {}) {
  WorldState w;
  w.ego = e;
  w.objects = std::move(objects);
  return w;
}

// A random state with a few objects scattered around the ego, some of them
// in its lane. Used by fuzz and additivity tests.
inline WorldState random_world(std::mt19937_64& rng, const safeperc::VehicleParams& p) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto U = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  WorldState w;
  w.ego = ego(U(-50.0, 50.0), U(0.0, 1.3 * p.v_lim), U(-p.a_min, p.a_max),
              static_cast<int>(U(0.0, 3.0)));
  const int n = static_cast<int>(U(0.0, 6.0));
  for (int i = 0; i < n; ++i) {
    const int lane = u01(rng) < 0.6 ? w.ego.lane : static_cast<int>(U(0.0, 3.0));
    const double pos = w.ego.position + U(-20.0, 80.0);
    if (u01(rng) < 0.3) {
      w.objects.push_back(pedestrian(i, lane, pos, U(-2.0, 2.0)));
    } else {
      w.objects.push_back(vehicle(i, lane, pos, U(-5.0, 25.0), U(p.a_brake, 10.0), 4.5));
    }
  }
  return w;
}

// Episode settings for closed-loop tests. epsilon is zero because the
// discrete controller can close the last few centimetres to a stationary
// object at walking pace; see the controller tests.
inline safeperc::EpisodeSettings guarantee_settings(std::uint64_t seed, int horizon = 100) {
  safeperc::EpisodeSettings s;
  s.scenario.seed = seed;
  s.scenario.horizon = horizon;
  s.params.epsilon = 0.0;
  return s;
}

// Reports, slot by slot, the ground truth behind each sensor reading
// (Absent for clutter and empty slots). Unlike the library's ground-truth
// stub its output is aligned with the frame, so rewards can be assigned.
class SlotTruthPerception final : public safeperc::Perception {
 public:
  explicit SlotTruthPerception(const safeperc::VehicleParams& params) : params_(params) {}
  safeperc::DetectionSequence detect(const safeperc::SensorFrame& frame, const WorldState& world,
                                     safeperc::Rng& /*rng*/) const override {
    using namespace safeperc;
    StepRecord step;
    step.world = world;
    step.frame = frame;
    const auto truth = ground_truth_tokens(step, params_, vocab_);
    DetectionSequence seq;
    seq.slots.resize(frame.slots.size());
    for (std::size_t s = 0; s < truth.size(); ++s) {
      SlotDetection& d = seq.slots[s];
      d.tokens = truth[s];
      d.prob.fill(1.0);
      d.logprob.fill(0.0);
      if (d.tokens.present())
        d.object = decode_object(d.tokens, frame.slots[s], world.ego, vocab_, params_.ego_length,
                                 static_cast<int>(s));
    }
    return seq;
  }

 private:
  safeperc::VehicleParams params_;
  safeperc::Vocabulary vocab_;
};

}  // namespace testing_support

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

#include "safeperc/episode.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace safeperc {
namespace {

std::set<int> prioritized_ids(const WorldState& w, double ego_length) {
  std::set<int> ids;
  for (const auto& o : prioritized_set(w, ego_length)) ids.insert(o.id);
  return ids;
}

}  // namespace

DetectionSequence GroundTruthPerception::detect(const SensorFrame& /*frame*/,
                                                const WorldState& world,
                                                Rng& /*rng*/) const {
  DetectionSequence seq;
  for (const auto& obj : world.objects) {
    if (!in_sensor_range(world.ego, obj, noise_, params_.ego_length)) continue;
    SlotDetection det;
    det.tokens = encode_object(obj, gap(world.ego, obj, params_.ego_length), vocab_);
    det.prob.fill(1.0);
    det.logprob.fill(0.0);
    det.object = obj;
    seq.slots.push_back(det);
  }
  return seq;
}

DetectionSequence BlindPerception::detect(const SensorFrame& frame,
                                          const WorldState& /*world*/,
                                          Rng& /*rng*/) const {
  DetectionSequence seq;
  seq.slots.resize(frame.slots.size());
  for (auto& s : seq.slots) {
    s.tokens = absent_tokens();
    s.prob.fill(1.0);
    s.logprob.fill(0.0);
  }
  return seq;
}

DetectionSequence PolicyPerception::detect(const SensorFrame& frame,
                                           const WorldState& world, Rng& rng) const {
  if (mode_ == Mode::kArgmax) return argmax_detect(*theta_, frame, world.ego, ego_length_);
  return sample(*theta_, frame, world.ego, ego_length_, rng);
}

Realization TrajectoryRecord::realization() const {
  Realization x;
  x.states.reserve(steps.size());
  for (const auto& s : steps) x.states.push_back(s.world);
  return x;
}

std::vector<ViolationVector> TrajectoryRecord::per_state_violations() const {
  std::vector<ViolationVector> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.violations);
  return out;
}

ViolationVector TrajectoryRecord::totals() const {
  ViolationVector total = zero_violations();
  for (const auto& s : steps) total += s.violations;
  return total;
}

TrajectoryRecord run_episode(const EpisodeSettings& settings, const Perception& perception) {
  return run_episode(settings, spawn(settings.scenario, settings.params), perception);
}

TrajectoryRecord run_episode(const EpisodeSettings& settings, Scenario initial,
                             const Perception& perception) {
  settings.scenario.validate();
  settings.params.validate();
  settings.noise.validate();
  if (settings.scenario.dt != settings.params.dt)
    throw InvariantError("scenario dt and vehicle dt differ");
  if (settings.n_slots < 1) throw InvariantError("n_slots must be >= 1");

  const VehicleParams& params = settings.params;
  Simulator sim(std::move(initial), settings.scenario, params, settings.noise);
  Rng policy_rng = make_rng(settings.scenario.seed, 3 + 4 * settings.policy_salt);

  TrajectoryRecord rec;
  rec.seed = settings.scenario.seed;
  rec.fog = settings.scenario.fog;
  rec.n_slots = settings.n_slots;
  rec.steps.reserve(static_cast<std::size_t>(settings.scenario.horizon));
  for (int t = 0; t < settings.scenario.horizon; ++t) {
    StepRecord step;
    step.frame = sim.sense(settings.n_slots);
    step.detections = perception.detect(step.frame, sim.world(), policy_rng);
    const std::vector<SceneObject> perceived = step.detections.objects();
    const std::vector<double> probs = step.detections.probs();
    step.command = ctrl(perceived, probs, sim.world().ego, params);
    step.world = sim.world();
    step.world.ego.accel = step.command.accel;
    step.violations = score_state(step.world, params);
    sim.step(step.command);
    rec.steps.push_back(std::move(step));
  }
  return rec;
}

ViolationVector closed_loop_check(const Scenario& initial, int horizon,
                                  const EpisodeSettings& settings) {
  const VehicleParams& params = settings.params;
  params.validate();
  for (const auto& o : initial.world.objects) {
    if (o.kind == ObjectKind::kVehicle && o.max_brake < params.a_brake)
      throw PreconditionError("object " + std::to_string(o.id) +
                              " has max_brake below the ego comfortable brake");
  }
  if (initial.world.ego.speed > params.v_lim)
    throw PreconditionError("initial ego speed exceeds the speed limit");

  WorldState x0 = initial.world;
  std::vector<SceneObject> visible;
  for (const auto& o : x0.objects) {
    if (in_sensor_range(x0.ego, o, settings.noise, params.ego_length)) visible.push_back(o);
  }
  x0.ego.accel = ctrl(visible, x0.ego, params).accel;
  if (score_state(x0, params).maxCoeff() != 0.0)
    throw PreconditionError("initial state is not rule compliant");

  EpisodeSettings s = settings;
  s.scenario.horizon = horizon;
  const GroundTruthPerception truth(params, settings.noise);
  const TrajectoryRecord rec = run_episode(s, initial, truth);

  for (std::size_t t = 0; t < rec.steps.size(); ++t) {
    const WorldState& w = rec.steps[t].world;
    // Strict, like the controller's overspeed branch: rounding past v_lim
    // already switches CTRL to full braking.
    if (w.ego.speed > params.v_lim)
      throw PreconditionError("ego speed exceeded the limit at step " + std::to_string(t));
    if (t > 0 && prioritized_ids(w, params.ego_length) !=
                     prioritized_ids(rec.steps[t - 1].world, params.ego_length))
      throw PreconditionError("prioritized set changed at step " + std::to_string(t));
  }
  return rec.totals();
}

}  // namespace safeperc

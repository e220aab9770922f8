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

#include "safeperc/rulebook.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace safeperc {
namespace {

// a_target values inside [0, kTargetFloor] count as zero in the progress rule.
constexpr double kTargetFloor = 1e-9;

}  // namespace

double required_clearance(const SceneObject& obj, double ego_speed,
                          const VehicleParams& params) {
  const double ego_stop = ego_speed * ego_speed / (2.0 * params.a_brake);
  if (uses_stopping_branch(obj)) return ego_stop;
  const double obj_stop = obj.speed * obj.speed / (2.0 * obj.max_brake);
  return std::max(0.0, ego_stop - obj_stop);
}

double permissible_speed(const SceneObject& obj, double gap_m,
                         const VehicleParams& params) {
  if (uses_stopping_branch(obj)) return std::sqrt(2.0 * params.a_brake * gap_m);
  const double obj_stop = obj.speed * obj.speed / (2.0 * obj.max_brake);
  return std::sqrt(2.0 * params.a_brake * (gap_m + obj_stop));
}

bool beyond_time_buffer(double gap_m, double clearance, double ego_speed,
                        const VehicleParams& params) {
  const double buffer = clearance + ego_speed * params.tau +
                        0.5 * params.a_brake * params.tau * params.tau;
  return gap_m > buffer;
}

RuleContext RuleContext::build(const EgoState& ego,
                               const std::vector<SceneObject>& objects,
                               const VehicleParams& params) {
  RuleContext ctx;
  ctx.ego = ego;
  ctx.params = params;
  for (const auto& obj : prioritized_set(ego, objects, params.ego_length)) {
    Entry e;
    e.object = obj;
    e.gap = gap(ego, obj, params.ego_length);
    e.clearance = required_clearance(obj, ego.speed, params);
    e.v_max = permissible_speed(obj, e.gap, params);
    e.beyond_buffer = beyond_time_buffer(e.gap, e.clearance, ego.speed, params);
    ctx.entries.push_back(e);
  }
  return ctx;
}

bool RuleContext::road_clear() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const Entry& e) { return e.beyond_buffer; });
}

SpeedCap RuleContext::max_speed() const {
  SpeedCap cap = SpeedCap::unbounded();
  for (const auto& e : entries) cap = min(cap, SpeedCap::bounded(e.v_max));
  return cap;
}

SpeedCap max_permissible_speed(std::span<const SceneObject> prioritized,
                               const EgoState& ego, const VehicleParams& params) {
  SpeedCap cap = SpeedCap::unbounded();
  for (const auto& obj : prioritized) {
    const double d = gap(ego, obj, params.ego_length);
    cap = min(cap, SpeedCap::bounded(permissible_speed(obj, d, params)));
  }
  return cap;
}

double target_accel(const RuleContext& ctx) {
  const auto& p = ctx.params;
  const double v_e = ctx.ego.speed;
  if (ctx.empty()) return std::min(p.a_max, (p.v_lim - v_e) / p.dt);
  if (ctx.road_clear()) {
    const double v_max = ctx.max_speed().value();
    return std::min(p.a_max, (v_max - p.a_brake * p.dt - v_e) / p.dt);
  }
  return 0.0;
}

double target_accel(const WorldState& world, const VehicleParams& params) {
  return target_accel(RuleContext::build(world, params));
}

double rb1(const RuleContext& ctx) {
  const double energy = ctx.ego.speed * ctx.ego.speed;
  double total = 0.0;
  for (const auto& e : ctx.entries) {
    if (e.gap < ctx.params.epsilon) total += energy;
  }
  return total;
}

double rb2(const RuleContext& ctx) {
  double total = 0.0;
  for (const auto& e : ctx.entries) total += std::max(0.0, e.clearance - e.gap);
  return total;
}

double rb3(const RuleContext& ctx) {
  if (!ctx.road_clear()) return 0.0;
  return std::max(0.0, -ctx.ego.accel);
}

double rb4(const RuleContext& ctx) {
  // Both non-zero branches (O empty, or every object beyond the buffer)
  // reduce to "road clear"; a_target is then the matching branch value.
  if (!ctx.road_clear()) return 0.0;
  const double a_target = target_accel(ctx);
  if (a_target <= kTargetFloor) return 0.0;
  return std::max(ctx.params.progress_ratio - ctx.ego.accel / a_target, 0.0);
}

double rb1(const WorldState& w, const VehicleParams& p) { return rb1(RuleContext::build(w, p)); }
double rb2(const WorldState& w, const VehicleParams& p) { return rb2(RuleContext::build(w, p)); }
double rb3(const WorldState& w, const VehicleParams& p) { return rb3(RuleContext::build(w, p)); }
double rb4(const WorldState& w, const VehicleParams& p) { return rb4(RuleContext::build(w, p)); }

ViolationVector score_state(const WorldState& world, const VehicleParams& params) {
  const RuleContext ctx = RuleContext::build(world, params);
  ViolationVector v;
  v << rb1(ctx), rb2(ctx), rb3(ctx), rb4(ctx);
  return v;
}

ViolationVector score_realization(const Realization& x,
                                  const VehicleParams& params) {
  if (x.empty()) throw std::invalid_argument("empty realization");
  ViolationVector total = zero_violations();
  for (const auto& s : x.states) total += score_state(s, params);
  return total;
}

ViolationVector score_suffix(const Realization& x, std::size_t t,
                             const VehicleParams& params) {
  if (t >= x.size()) {
    throw std::out_of_range("suffix index " + std::to_string(t) +
                            " outside realization of length " +
                            std::to_string(x.size()));
  }
  ViolationVector total = zero_violations();
  for (std::size_t s = t; s < x.size(); ++s) total += score_state(x.states[s], params);
  return total;
}

ViolationVector discounted_suffix(std::span<const ViolationVector> per_state,
                                  std::size_t t, double gamma) {
  if (t >= per_state.size()) throw std::out_of_range("suffix index out of range");
  ViolationVector total = zero_violations();
  double weight = 1.0;
  for (std::size_t s = t; s < per_state.size(); ++s) {
    total += weight * per_state[s];
    weight *= gamma;
  }
  return total;
}

}  // namespace safeperc

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

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "safeperc/domain.hpp"

namespace safeperc {

inline constexpr int kNumRules = 4;

// Per-rule violation scores: [collision, clearance, unnecessary brake,
// progress]. Every entry is non-negative.
using ViolationVector = Eigen::Matrix<double, kNumRules, 1>;

inline ViolationVector zero_violations() { return ViolationVector::Zero(); }

// Maximum permissible ego speed. Unbounded when no object constrains it.
class SpeedCap {
 public:
  static SpeedCap unbounded() { return SpeedCap(); }
  static SpeedCap bounded(double v) { return SpeedCap(v); }

  bool is_bounded() const { return bounded_; }
  // Only meaningful when is_bounded().
  double value() const { return value_; }

  friend SpeedCap min(const SpeedCap& a, const SpeedCap& b) {
    if (!a.bounded_) return b;
    if (!b.bounded_) return a;
    return a.value_ <= b.value_ ? a : b;
  }
  bool operator==(const SpeedCap&) const = default;

 private:
  SpeedCap() = default;
  explicit SpeedCap(double v) : bounded_(true), value_(v) {}
  bool bounded_ = false;
  double value_ = 0.0;
};

// c_i: gap needed so comfortable ego braking avoids the object.
double required_clearance(const SceneObject& obj, double ego_speed,
                          const VehicleParams& params);

// v_max,i for a single object at bumper gap `gap_m`.
double permissible_speed(const SceneObject& obj, double gap_m,
                         const VehicleParams& params);

// The time-buffer predicate d_i > c_i + v_e*tau + a_brake*tau^2/2. Shared by
// the unnecessary-brake rule, the progress rule and the target acceleration.
bool beyond_time_buffer(double gap_m, double clearance, double ego_speed,
                        const VehicleParams& params);

// Derived per-object quantities for the prioritized set of one ego state.
struct RuleContext {
  struct Entry {
    SceneObject object;
    double gap = 0.0;
    double clearance = 0.0;
    double v_max = 0.0;
    bool beyond_buffer = false;
  };

  static RuleContext build(const EgoState& ego,
                           const std::vector<SceneObject>& objects,
                           const VehicleParams& params);
  static RuleContext build(const WorldState& world, const VehicleParams& params) {
    return build(world.ego, world.objects, params);
  }

  EgoState ego;
  VehicleParams params;
  std::vector<Entry> entries;  // the prioritized set O, ascending gap

  bool empty() const { return entries.empty(); }
  // Every o_i in O is beyond the time buffer; vacuously true for O empty.
  bool road_clear() const;
  SpeedCap max_speed() const;
};

SpeedCap max_permissible_speed(std::span<const SceneObject> prioritized,
                               const EgoState& ego, const VehicleParams& params);

double target_accel(const RuleContext& ctx);
double target_accel(const WorldState& world, const VehicleParams& params);

double rb1(const RuleContext& ctx);
double rb2(const RuleContext& ctx);
double rb3(const RuleContext& ctx);
double rb4(const RuleContext& ctx);

double rb1(const WorldState& world, const VehicleParams& params);
double rb2(const WorldState& world, const VehicleParams& params);
double rb3(const WorldState& world, const VehicleParams& params);
double rb4(const WorldState& world, const VehicleParams& params);

ViolationVector score_state(const WorldState& world, const VehicleParams& params);

// Sum of score_state over all states. Throws std::invalid_argument on an
// empty realization.
ViolationVector score_realization(const Realization& x,
                                  const VehicleParams& params);

// Score of the tail [x_t .. x_T]. Throws std::out_of_range for a bad t.
ViolationVector score_suffix(const Realization& x, std::size_t t,
                             const VehicleParams& params);

// Same tail sum computed from precomputed per-state scores, discounted by
// gamma^(s - t). gamma = 1 reproduces score_suffix.
ViolationVector discounted_suffix(std::span<const ViolationVector> per_state,
                                  std::size_t t, double gamma);

}  // namespace safeperc

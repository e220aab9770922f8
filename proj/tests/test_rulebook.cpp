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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles/handcrafted_states.hpp"
#include "oracles/rulebook_oracle.hpp"
#include "safeperc/rulebook.hpp"
#include "support.hpp"

using namespace safeperc;
using namespace testing_support;

namespace {

// Builds a state whose single prioritized pedestrian sits at exactly `gap_m`.
WorldState pedestrian_at_gap(double v_e, double a_e, double gap_m) {
  return world(ego(0, v_e, a_e), {pedestrian(1, 0, gap_m + 2.25)});
}

}  // namespace

TEST_CASE("required clearance examples") {
  const VehicleParams p;
  CHECK(required_clearance(vehicle(1, 0, 50, 10, 5), 20, p) == 40.0);
  CHECK(required_clearance(pedestrian(1, 0, 50), 10, p) == 12.5);
  CHECK(required_clearance(vehicle(1, 0, 50, 10, 5), 0, p) == 0.0);
  CHECK(required_clearance(pedestrian(1, 0, 50), 0, p) == 0.0);
  // Oncoming traffic uses the full stopping distance.
  CHECK(required_clearance(vehicle(1, 0, 50, -3, 5), 10, p) == 12.5);
}

TEST_CASE("collision rule") {
  VehicleParams p;
  p.epsilon = 0.1;
  CHECK(rb1(world(ego(0, 10), {vehicle(1, 0, 4.05, 0)}), p) == doctest::Approx(100));
  CHECK(rb1(world(ego(0, 10), {vehicle(1, 0, 4.25, 0), vehicle(2, 0, 30, 0)}), p) == 0.0);
  CHECK(rb1(world(ego(0, 5), {vehicle(1, 0, 4, 0), pedestrian(2, 0, 2.3)}), p) == 50.0);
  // Adjacent-lane contact does not count.
  CHECK(rb1(world(ego(0, 5), {vehicle(1, 1, 4, 0)}), p) == 0.0);
}

TEST_CASE("clearance rule") {
  const VehicleParams p;
  // c = 40 in both states (v_e = 20, lead 10 m/s braking at 5).
  CHECK(rb2(world(ego(0, 20), {vehicle(1, 0, 34, 10, 5)}), p) == 10.0);
  CHECK(rb2(world(ego(0, 20), {vehicle(1, 0, 64, 10, 5)}), p) == 0.0);
  CHECK(rb2(world(ego(0, 20)), p) == 0.0);
}

TEST_CASE("clearance boundary is compliant") {
  const VehicleParams p;
  // v_e = 4 gives c = 2 exactly; the pedestrian gap is 2 exactly.
  const WorldState w = pedestrian_at_gap(4, 0, 2.0);
  REQUIRE(gap(w.ego, w.objects[0], p.ego_length) == 2.0);
  REQUIRE(required_clearance(w.objects[0], 4, p) == 2.0);
  CHECK(rb2(w, p) == 0.0);
  CHECK(rb2(pedestrian_at_gap(4, 0, 1.999), p) > 0.0);
}

TEST_CASE("unnecessary braking rule") {
  const VehicleParams p;
  CHECK(rb3(world(ego(0, 10, -2)), p) == 2.0);
  CHECK(rb3(world(ego(0, 10, 1)), p) == 0.0);
  // Threshold for a stationary pedestrian at v_e = 10: 12.5 + 5 + 0.5 = 18.
  CHECK(rb3(pedestrian_at_gap(10, -3, 17.99), p) == 0.0);
  CHECK(rb3(pedestrian_at_gap(10, -3, 18.0), p) == 0.0);
  CHECK(rb3(pedestrian_at_gap(10, -3, 18.01), p) == 3.0);
}

TEST_CASE("target acceleration branches") {
  const VehicleParams p;
  CHECK(target_accel(world(ego(0, 10)), p) == 3.0);
  CHECK(target_accel(world(ego(0, 15)), p) == 0.0);
  CHECK(target_accel(pedestrian_at_gap(10, 0, 10), p) == 0.0);
  // Clear road: v_max = sqrt(8 * 50) = 20, (20 - 0.4 - 10) / 0.1 = 96, capped at 3.
  CHECK(target_accel(pedestrian_at_gap(10, 0, 50), p) == 3.0);
  VehicleParams slow = p;
  slow.a_max = 100.0;
  CHECK(target_accel(pedestrian_at_gap(10, 0, 50), slow) == doctest::Approx(96.0));
}

TEST_CASE("progress rule") {
  const VehicleParams p;
  VehicleParams loose = p;
  loose.a_max = 2.0;
  CHECK(rb4(world(ego(0, 10, 1)), loose) == doctest::Approx(0.3));
  CHECK(rb4(world(ego(0, 10, 3)), p) == 0.0);
  CHECK(rb4(world(ego(0, 15, -1)), p) == 0.0);
  CHECK(rb4(pedestrian_at_gap(10, -1, 10), p) == 0.0);
  // a_target just above zero but under the floor counts as zero.
  CHECK(rb4(world(ego(0, 15.0 - 1e-11, -1)), p) == 0.0);
}

TEST_CASE("maximum permissible speed") {
  const VehicleParams p;
  const EgoState e = ego(0, 10);
  const std::vector<SceneObject> ped{pedestrian(1, 0, 52.25)};
  CHECK(max_permissible_speed(ped, e, p).value() == 20.0);
  CHECK_FALSE(max_permissible_speed({}, e, p).is_bounded());
  const std::vector<SceneObject> stopped{vehicle(1, 0, 4, 0)};
  CHECK(max_permissible_speed(stopped, e, p).value() == 0.0);
  const std::vector<SceneObject> both{pedestrian(1, 0, 52.25), vehicle(2, 0, 20, 8)};
  // Vehicle: sqrt(8 * (16 + 4)) < 20.
  CHECK(max_permissible_speed(both, e, p).value() == doctest::Approx(std::sqrt(160.0)));
  CHECK(min(SpeedCap::unbounded(), SpeedCap::bounded(3)) == SpeedCap::bounded(3));
}

TEST_CASE("score_state composes the four rules") {
  VehicleParams p;
  p.a_max = 2.0;
  const WorldState w = world(ego(0, 10, 1));
  const ViolationVector v = score_state(w, p);
  CHECK(v(0) == 0.0);
  CHECK(v(1) == 0.0);
  CHECK(v(2) == 0.0);
  CHECK(v(3) == doctest::Approx(0.3));
  const ViolationVector b = score_state(world(ego(0, 20, 0), {vehicle(1, 0, 34, 10, 5)}), p);
  CHECK(b(1) == 10.0);
}

TEST_CASE("realization and suffix sums") {
  const VehicleParams p;
  Realization x;
  x.states.push_back(world(ego(0, 20), {vehicle(1, 0, 34, 10, 5)}));
  x.states.push_back(world(ego(0, 20), {vehicle(1, 0, 39, 10, 5)}));
  CHECK(score_realization(x, p)(1) == 15.0);
  CHECK(score_suffix(x, 0, p) == score_realization(x, p));
  CHECK(score_suffix(x, 1, p) == score_state(x.states[1], p));

  Realization single;
  single.states.push_back(x.states[0]);
  CHECK(score_realization(single, p) == score_state(x.states[0], p));

  CHECK_THROWS_AS(score_suffix(x, 2, p), std::out_of_range);
  CHECK_THROWS_WITH_AS(score_realization(Realization{}, p), "empty realization",
                       std::invalid_argument);
}

TEST_CASE("discounted suffix with gamma one equals the plain suffix") {
  const VehicleParams p;
  std::mt19937_64 rng(11);
  Realization x;
  for (int i = 0; i < 40; ++i) x.states.push_back(random_world(rng, p));
  std::vector<ViolationVector> per;
  for (const auto& s : x.states) per.push_back(score_state(s, p));
  for (std::size_t t = 0; t < x.size(); t += 7) {
    CHECK(discounted_suffix(per, t, 1.0) == score_suffix(x, t, p));
  }
  const ViolationVector half = discounted_suffix(per, 0, 0.5);
  ViolationVector manual = zero_violations();
  double w = 1.0;
  for (const auto& v : per) {
    manual += w * v;
    w *= 0.5;
  }
  CHECK((half - manual).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle agrees exactly on the handcrafted states") {
  const auto cases = oracle::handcrafted_cases();
  REQUIRE(cases.size() >= 20);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const oracle::Scored o = oracle::score(c.world, c.params);
    const ViolationVector v = score_state(c.world, c.params);
    for (int k = 0; k < kNumRules; ++k) CHECK(v(k) == o.rb[static_cast<std::size_t>(k)]);
    CHECK(target_accel(c.world, c.params) == o.a_target);
    const auto cap = RuleContext::build(c.world, c.params).max_speed();
    if (cap.is_bounded()) {
      CHECK(cap.value() == o.v_max);
    } else {
      CHECK(std::isinf(o.v_max));
    }
  }
}

TEST_CASE("handcrafted states cover every branch") {
  oracle::Coverage all;
  bool rb1_hit = false, rb2_hit = false, rb3_hit = false, rb4_hit = false;
  for (const auto& c : oracle::handcrafted_cases()) {
    const auto cov = oracle::coverage(c.world, c.params);
    all.empty_o |= cov.empty_o;
    all.nonempty_o |= cov.nonempty_o;
    all.vehicle_clearance |= cov.vehicle_clearance;
    all.stopping_clearance |= cov.stopping_clearance;
    all.rb3_vacuous |= cov.rb3_vacuous;
    all.target_empty |= cov.target_empty;
    all.target_clear |= cov.target_clear;
    all.target_zero |= cov.target_zero;
    const auto v = score_state(c.world, c.params);
    rb1_hit |= v(0) > 0;
    rb2_hit |= v(1) > 0;
    rb3_hit |= v(2) > 0;
    rb4_hit |= v(3) > 0;
  }
  CHECK(all.empty_o);
  CHECK(all.nonempty_o);
  CHECK(all.vehicle_clearance);
  CHECK(all.stopping_clearance);
  CHECK(all.rb3_vacuous);
  CHECK(all.target_empty);
  CHECK(all.target_clear);
  CHECK(all.target_zero);
  CHECK(rb1_hit);
  CHECK(rb2_hit);
  CHECK(rb3_hit);
  CHECK(rb4_hit);
}

TEST_CASE("oracle agrees on random states") {
  std::mt19937_64 rng(2024);
  const VehicleParams p;
  for (int i = 0; i < 2000; ++i) {
    const WorldState w = random_world(rng, p);
    const oracle::Scored o = oracle::score(w, p);
    const ViolationVector v = score_state(w, p);
    for (int k = 0; k < kNumRules; ++k) {
      const double ref = o.rb[static_cast<std::size_t>(k)];
      REQUIRE(std::abs(v(k) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("rule outputs are never negative") {
  std::mt19937_64 rng(99);
  VehicleParams p;
  for (int i = 0; i < 10000; ++i) {
    const WorldState w = random_world(rng, p);
    const ViolationVector v = score_state(w, p);
    REQUIRE(v.minCoeff() >= 0.0);
    REQUIRE(v.allFinite());
  }
}

TEST_CASE("realization score is additive over 1000 states") {
  std::mt19937_64 rng(5);
  const VehicleParams p;
  Realization x;
  for (int i = 0; i < 1000; ++i) x.states.push_back(random_world(rng, p));
  ViolationVector manual = zero_violations();
  for (const auto& s : x.states) manual += score_state(s, p);
  const ViolationVector total = score_realization(x, p);
  CHECK((total - manual).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((score_suffix(x, 0, p) - total).cwiseAbs().maxCoeff() <= 1e-9);
  for (std::size_t t = 0; t + 1 < x.size(); t += 37) {
    const ViolationVector a = score_suffix(x, t, p);
    const ViolationVector b = score_suffix(x, t + 1, p);
    CHECK(((a - b).array() >= -1e-9).all());
  }
}

TEST_CASE("braking and progress rules share the buffer predicate") {
  std::mt19937_64 rng(31);
  const VehicleParams p;
  for (int i = 0; i < 5000; ++i) {
    const WorldState w = random_world(rng, p);
    const RuleContext ctx = RuleContext::build(w, p);
    bool all_beyond = true;
    for (const auto& e : ctx.entries) {
      all_beyond = all_beyond && beyond_time_buffer(e.gap, e.clearance, w.ego.speed, p);
    }
    REQUIRE(ctx.road_clear() == all_beyond);
    if (rb3(ctx) > 0.0) REQUIRE(ctx.road_clear());
    if (rb4(ctx) > 0.0) REQUIRE(ctx.road_clear());
    if (!ctx.road_clear()) REQUIRE(target_accel(ctx) == 0.0);
  }
}

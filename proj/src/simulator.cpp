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

#include "safeperc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "safeperc/rulebook.hpp"

namespace safeperc {
namespace {

constexpr double kDespawnBehind = 30.0;
constexpr double kSpawnFar = 120.0;
constexpr double kSpawnNear = 5.0;

double uniform(Rng& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

double gauss(Rng& rng, double mean, double sigma) {
  if (!(sigma > 0.0)) return mean;
  return std::normal_distribution<double>(mean, sigma)(rng);
}

// Position of an object center whose rear sits `gap_m` ahead of the ego front.
double center_at_gap(const EgoState& ego, double gap_m, double depth,
                     double ego_length) {
  return ego.position + 0.5 * ego_length + gap_m + 0.5 * depth;
}

// Advance one object under constant deceleration `brake` (>= 0), stopping
// mid-step instead of reversing. Negative speeds (oncoming) never brake.
void advance(SceneObject& obj, double brake, double dt) {
  if (brake <= 0.0 || obj.speed <= 0.0) {
    obj.position += obj.speed * dt;
    return;
  }
  const double v_next = obj.speed - brake * dt;
  if (v_next >= 0.0) {
    obj.position += obj.speed * dt - 0.5 * brake * dt * dt;
    obj.speed = v_next;
  } else {
    obj.position += obj.speed * obj.speed / (2.0 * brake);
    obj.speed = 0.0;
  }
}

std::vector<SceneObject> visible_truth(const WorldState& w) {
  std::vector<SceneObject> out;
  for (const auto& o : w.objects) {
    if (o.position > w.ego.position) out.push_back(o);
  }
  return out;
}

// One spawn attempt; returns nullopt when the draw violates a placement
// constraint.
std::optional<Scenario> try_spawn(const ScenarioConfig& cfg,
                                  const VehicleParams& params, Rng& rng) {
  Scenario sc;
  EgoState& ego = sc.world.ego;
  ego.speed = uniform(rng, 0.0, params.v_lim);

  const double d_cap =
      std::pow(params.v_lim + params.a_brake * params.dt, 2) / (2.0 * params.a_brake);

  struct Pending {
    SceneObject obj;
    ObjectBehavior behavior;
  };
  std::vector<Pending> own_lane;
  std::vector<Pending> others;

  for (int i = 0; i < cfg.n_objects; ++i) {
    Pending p;
    p.obj.id = i + 1;
    p.obj.lane = std::uniform_int_distribution<int>(0, cfg.n_lanes - 1)(rng);
    const bool ped = bernoulli(rng, cfg.pedestrian_fraction);
    if (ped) {
      p.obj.kind = ObjectKind::kPedestrian;
      p.obj.width = 0.5;
      p.obj.height = 1.8;
      p.obj.depth = cfg.pedestrian_depth;
      p.obj.speed = 0.0;
      p.obj.max_brake = cfg.object_max_brake;
      p.behavior.kind = Behavior::kStationary;
    } else {
      p.obj.kind = ObjectKind::kVehicle;
      p.obj.width = 2.0;
      p.obj.height = 1.8;
      p.obj.depth = cfg.vehicle_depth;
      p.obj.max_brake = cfg.object_max_brake;
      std::discrete_distribution<int> mix(cfg.behavior_mix.begin(),
                                          cfg.behavior_mix.end());
      p.behavior.kind = static_cast<Behavior>(mix(rng));
      const bool own = p.obj.lane == ego.lane;
      if (p.behavior.kind == Behavior::kStationary) {
        p.obj.speed = 0.0;
      } else if (own && cfg.compliant_start) {
        // Leads never outrun the ego, so the gap (and v_max) cannot grow.
        p.obj.speed = uniform(rng, 0.0, std::min(ego.speed, params.v_lim - 1.0));
      } else if (!own && cfg.n_lanes > 1 && p.obj.lane == cfg.n_lanes - 1 &&
                 bernoulli(rng, 0.5)) {
        p.obj.speed = -uniform(rng, 5.0, params.v_lim);
        p.behavior.kind = Behavior::kConstantSpeed;
      } else {
        p.obj.speed = uniform(rng, 0.0, params.v_lim);
      }
    }
    (p.obj.lane == ego.lane ? own_lane : others).push_back(p);
  }

  for (auto& p : others) {
    p.obj.position = center_at_gap(ego, uniform(rng, kSpawnNear, kSpawnFar),
                                   p.obj.depth, params.ego_length);
  }

  double prev_gap = 0.0;
  for (std::size_t k = 0; k < own_lane.size(); ++k) {
    auto& p = own_lane[k];
    double g = 0.0;
    if (!cfg.compliant_start) {
      g = uniform(rng, 2.0, kSpawnFar);
    } else if (k == 0) {
      const double c = required_clearance(p.obj, ego.speed, params);
      const double lead_stop = uses_stopping_branch(p.obj)
                                   ? 0.0
                                   : p.obj.speed * p.obj.speed / (2.0 * p.obj.max_brake);
      const double lo = std::max(c, params.epsilon) + 0.05;
      const double hi = d_cap - lead_stop;
      if (hi <= lo) return std::nullopt;
      g = uniform(rng, lo, hi);
    } else {
      g = prev_gap + p.obj.depth + uniform(rng, 10.0, 40.0);
      if (g > kSpawnFar) return std::nullopt;
    }
    prev_gap = g;
    p.obj.position = center_at_gap(ego, g, p.obj.depth, params.ego_length);
  }

  for (auto* group : {&own_lane, &others}) {
    for (auto& p : *group) {
      sc.world.objects.push_back(p.obj);
      sc.behaviors.push_back(p.behavior);
    }
  }
  // Stable id order regardless of lane grouping.
  std::vector<std::size_t> order(sc.world.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sc.world.objects[a].id < sc.world.objects[b].id;
  });
  Scenario sorted;
  sorted.world.ego = sc.world.ego;
  for (auto i : order) {
    sorted.world.objects.push_back(sc.world.objects[i]);
    sorted.behaviors.push_back(sc.behaviors[i]);
  }

  if (cfg.compliant_start) {
    WorldState& w = sorted.world;
    w.ego.accel = ctrl(visible_truth(w), w.ego, params).accel;
    const RuleContext rc = RuleContext::build(w, params);
    if (!rc.empty() && rc.max_speed().value() > params.v_lim + params.a_brake * params.dt)
      return std::nullopt;
    if (score_state(w, params).maxCoeff() != 0.0) return std::nullopt;
  }
  return sorted;
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream & 0xffffffffu),
                    static_cast<std::uint32_t>(stream >> 32), 0x5afe9e2cu};
  return Rng(seq);
}

const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::kConstantSpeed: return "constant_speed";
    case Behavior::kRandomBrake: return "random_brake";
    case Behavior::kStationary: return "stationary";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (n_lanes < 1) throw InvariantError("n_lanes must be >= 1");
  if (n_objects < 0) throw InvariantError("n_objects must be >= 0");
  if (!(pedestrian_fraction >= 0.0 && pedestrian_fraction <= 1.0))
    throw InvariantError("pedestrian_fraction must lie in [0, 1]");
  if (!(fog >= 0.0 && fog <= 100.0)) throw InvariantError("fog must lie in [0, 100]");
  if (horizon < 1) throw InvariantError("horizon must be >= 1");
  if (!(dt > 0.0)) throw InvariantError("dt must be > 0");
  double sum = 0.0;
  for (double p : behavior_mix) {
    if (p < 0.0) throw InvariantError("behavior_mix entries must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvariantError("behavior_mix must sum to 1");
  if (spawn_retries < 1) throw InvariantError("spawn_retries must be >= 1");
  if (!(pedestrian_depth > 0.0 && vehicle_depth > 0.0))
    throw InvariantError("object depths must be > 0");
  if (!(random_brake_start_prob >= 0.0 && random_brake_start_prob <= 1.0))
    throw InvariantError("random_brake_start_prob must lie in [0, 1]");
}

void NoiseModel::validate() const {
  for (double v : {sigma_gap0, sigma_speed0, sigma_lane0, sigma_class0, miss0,
                   sigma_intensity, clutter_rate, intensity_real, intensity_clutter}) {
    if (!(v >= 0.0)) throw InvariantError("noise parameters must be >= 0");
  }
  if (!(fog_sigma_scale > 0.0 && fog_miss_scale > 0.0 && fog_intensity_scale > 0.0))
    throw InvariantError("fog scales must be > 0");
  if (!(miss_cap >= 0.0 && miss_cap <= 0.9)) throw InvariantError("miss_cap must lie in [0, 0.9]");
  if (clutter_rate > 1.0) throw InvariantError("clutter_rate must be <= 1");
  if (max_clutter < 0) throw InvariantError("max_clutter must be >= 0");
  if (!(sensor_range > 0.0)) throw InvariantError("sensor_range must be > 0");
}

double NoiseModel::miss_probability(double fog) const {
  return std::clamp(miss0 + fog / fog_miss_scale, 0.0, miss_cap);
}

Scenario spawn(const ScenarioConfig& config, const VehicleParams& params) {
  config.validate();
  params.validate();
  if (config.compliant_start && params.a_brake > config.object_max_brake)
    throw InvariantError("object_max_brake must be >= a_brake");
  Rng rng = make_rng(config.seed, 0);
  for (int attempt = 0; attempt < config.spawn_retries; ++attempt) {
    if (auto sc = try_spawn(config, params, rng)) {
      sc->world.time = 0.0;
      return *sc;
    }
  }
  throw std::runtime_error("spawn: no feasible placement after " +
                           std::to_string(config.spawn_retries) + " attempts");
}

EgoState integrate_ego(const EgoState& ego, double u, double dt) {
  EgoState next = ego;
  next.accel = u;
  const double v_next = ego.speed + u * dt;
  if (v_next >= 0.0) {
    next.position = ego.position + ego.speed * dt + 0.5 * u * dt * dt;
    next.speed = v_next;
  } else {
    // u < 0 here: stop after v / |u| seconds.
    next.position = ego.position + ego.speed * ego.speed / (2.0 * -u);
    next.speed = 0.0;
  }
  return next;
}

bool in_sensor_range(const EgoState& ego, const SceneObject& obj,
                     const NoiseModel& noise, double ego_length) {
  return obj.position > ego.position && gap(ego, obj, ego_length) <= noise.sensor_range;
}

SensorFrame sense(const WorldState& world, const NoiseModel& noise, double fog,
                  int n_slots, double ego_length, Rng& rng) {
  const double scale = noise.sigma_scale(fog);
  const double miss = noise.miss_probability(fog);
  const double atten = noise.intensity_attenuation(fog);

  struct Tagged {
    SensorReading r;
    int source;
  };
  std::vector<Tagged> readings;
  for (const auto& obj : world.objects) {
    if (!in_sensor_range(world.ego, obj, noise, ego_length)) continue;
    if (bernoulli(rng, miss)) continue;
    SensorReading r;
    r.gap = std::max(0.0, gauss(rng, gap(world.ego, obj, ego_length), noise.sigma_gap0 * scale));
    r.speed = gauss(rng, obj.speed, noise.sigma_speed0 * scale);
    r.lane_offset = gauss(rng, obj.lane - world.ego.lane, noise.sigma_lane0 * scale);
    const double indicator = obj.kind == ObjectKind::kVehicle ? 1.0 : 0.0;
    r.class_evidence = std::clamp(gauss(rng, indicator, noise.sigma_class0 * scale), 0.0, 1.0);
    r.intensity = std::max(0.0, gauss(rng, noise.intensity_real * atten, noise.sigma_intensity));
    readings.push_back({r, obj.id});
  }
  for (int k = 0; k < noise.max_clutter; ++k) {
    if (!bernoulli(rng, noise.clutter_rate)) continue;
    SensorReading r;
    r.gap = uniform(rng, 0.0, noise.sensor_range);
    r.speed = uniform(rng, -10.0, 30.0);
    const int lane = std::uniform_int_distribution<int>(-1, 1)(rng);
    r.lane_offset = gauss(rng, lane, noise.sigma_lane0 * scale);
    r.class_evidence = uniform(rng, 0.0, 1.0);
    r.intensity = std::max(0.0, gauss(rng, noise.intensity_clutter, noise.sigma_intensity));
    readings.push_back({r, kClutterSource});
  }
  if (static_cast<int>(readings.size()) > n_slots) {
    std::stable_sort(readings.begin(), readings.end(),
                     [](const Tagged& a, const Tagged& b) { return a.r.gap < b.r.gap; });
    readings.resize(static_cast<std::size_t>(n_slots));
  }

  SensorFrame frame;
  frame.fog = fog;
  frame.slots.assign(static_cast<std::size_t>(n_slots), std::nullopt);
  frame.sources.assign(static_cast<std::size_t>(n_slots), kEmptySource);
  std::vector<int> order(static_cast<std::size_t>(n_slots));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < readings.size(); ++i) {
    const auto slot = static_cast<std::size_t>(order[i]);
    frame.slots[slot] = readings[i].r;
    frame.sources[slot] = readings[i].source;
  }
  return frame;
}

Simulator::Simulator(Scenario scenario, const ScenarioConfig& config,
                     const VehicleParams& params, const NoiseModel& noise)
    : scenario_(std::move(scenario)),
      config_(config),
      params_(params),
      noise_(noise),
      world_rng_(make_rng(config.seed, 1)),
      sensor_rng_(make_rng(config.seed, 2)) {
  if (scenario_.behaviors.size() != scenario_.world.objects.size())
    throw std::invalid_argument("Simulator: behaviors/objects size mismatch");
}

SensorFrame Simulator::sense(int n_slots) {
  return safeperc::sense(scenario_.world, noise_, config_.fog, n_slots,
                         params_.ego_length, sensor_rng_);
}

void Simulator::step(ControlCommand u) {
  WorldState& w = scenario_.world;
  const double dt = params_.dt;
  w.ego = integrate_ego(w.ego, u.accel, dt);

  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    SceneObject& obj = w.objects[i];
    ObjectBehavior& b = scenario_.behaviors[i];
    double brake = 0.0;
    switch (b.kind) {
      case Behavior::kStationary:
        continue;
      case Behavior::kConstantSpeed:
        break;
      case Behavior::kRandomBrake:
        if (b.brake_steps_left == 0 && bernoulli(world_rng_, config_.random_brake_start_prob)) {
          b.brake_steps_left = std::uniform_int_distribution<int>(5, 20)(world_rng_);
          b.brake_rate = uniform(world_rng_, 1.0, obj.max_brake);
        }
        if (b.brake_steps_left > 0) {
          brake = std::min(b.brake_rate, obj.max_brake);
          --b.brake_steps_left;
        }
        break;
    }
    advance(obj, brake, dt);
  }

  std::vector<SceneObject> kept;
  std::vector<ObjectBehavior> kept_b;
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    const SceneObject& obj = w.objects[i];
    const bool behind = obj.position < w.ego.position - kDespawnBehind;
    const bool ahead = obj.position > w.ego.position &&
                       gap(w.ego, obj, params_.ego_length) > noise_.sensor_range;
    if (behind || ahead) continue;
    kept.push_back(obj);
    kept_b.push_back(scenario_.behaviors[i]);
  }
  w.objects = std::move(kept);
  scenario_.behaviors = std::move(kept_b);
  w.time += dt;
}

}  // namespace safeperc

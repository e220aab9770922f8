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

#include "safeperc/trajlog.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace safeperc {
namespace {

using nlohmann::json;

json to_json(const SceneObject& o) {
  return {{"id", o.id},         {"kind", to_string(o.kind)}, {"lane", o.lane},
          {"position", o.position}, {"width", o.width},     {"height", o.height},
          {"depth", o.depth},   {"speed", o.speed},          {"max_brake", o.max_brake}};
}

SceneObject object_from(const json& j) {
  SceneObject o;
  o.id = j.at("id").get<int>();
  o.kind = object_kind_from_string(j.at("kind").get<std::string>());
  o.lane = j.at("lane").get<int>();
  o.position = j.at("position").get<double>();
  o.width = j.at("width").get<double>();
  o.height = j.at("height").get<double>();
  o.depth = j.at("depth").get<double>();
  o.speed = j.at("speed").get<double>();
  o.max_brake = j.at("max_brake").get<double>();
  return o;
}

json to_json(const VehicleParams& p) {
  return {{"a_max", p.a_max},     {"a_min", p.a_min},     {"a_brake", p.a_brake},
          {"v_lim", p.v_lim},     {"dt", p.dt},           {"tau", p.tau},
          {"epsilon", p.epsilon}, {"r", p.progress_ratio}, {"ego_length", p.ego_length}};
}

VehicleParams vehicle_from(const json& j) {
  VehicleParams p;
  p.a_max = j.at("a_max").get<double>();
  p.a_min = j.at("a_min").get<double>();
  p.a_brake = j.at("a_brake").get<double>();
  p.v_lim = j.at("v_lim").get<double>();
  p.dt = j.at("dt").get<double>();
  p.tau = j.at("tau").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  p.progress_ratio = j.at("r").get<double>();
  p.ego_length = j.at("ego_length").get<double>();
  return p;
}

json step_to_json(std::size_t t, const StepRecord& s) {
  json j;
  j["t"] = t;
  j["time"] = s.world.time;
  const EgoState& e = s.world.ego;
  j["ego"] = {{"position", e.position}, {"lane", e.lane},
              {"speed", e.speed},       {"accel", e.accel},
              {"heading", e.heading}};
  json objects = json::array();
  for (const auto& o : s.world.objects) objects.push_back(to_json(o));
  j["objects"] = std::move(objects);

  json slots = json::array();
  for (const auto& r : s.frame.slots) {
    if (!r) {
      slots.push_back(nullptr);
    } else {
      slots.push_back({{"gap", r->gap},
                       {"speed", r->speed},
                       {"lane_offset", r->lane_offset},
                       {"class_evidence", r->class_evidence},
                       {"intensity", r->intensity}});
    }
  }
  j["slots"] = std::move(slots);
  j["sources"] = s.frame.sources;
  j["fog"] = s.frame.fog;

  json dets = json::array();
  for (const auto& d : s.detections.slots) {
    json dj;
    dj["tokens"] = std::vector<int>(d.tokens.tokens.begin(),
                                    d.tokens.tokens.begin() + d.tokens.count);
    dj["prob"] = d.prob;
    dj["logprob"] = d.logprob;
    dj["object"] = d.object ? to_json(*d.object) : json(nullptr);
    dets.push_back(std::move(dj));
  }
  j["detections"] = std::move(dets);
  j["accel"] = s.command.accel;
  j["violations"] = std::array<double, kNumRules>{s.violations(0), s.violations(1),
                                                  s.violations(2), s.violations(3)};
  return j;
}

StepRecord step_from(const json& j, std::size_t expected_t) {
  StepRecord s;
  if (j.at("t").get<std::size_t>() != expected_t)
    throw std::invalid_argument("step index out of sequence");
  s.world.time = j.at("time").get<double>();
  const json& e = j.at("ego");
  s.world.ego.position = e.at("position").get<double>();
  s.world.ego.lane = e.at("lane").get<int>();
  s.world.ego.speed = e.at("speed").get<double>();
  s.world.ego.accel = e.at("accel").get<double>();
  s.world.ego.heading = e.at("heading").get<double>();
  for (const auto& o : j.at("objects")) s.world.objects.push_back(object_from(o));

  for (const auto& r : j.at("slots")) {
    if (r.is_null()) {
      s.frame.slots.emplace_back(std::nullopt);
    } else {
      SensorReading rd;
      rd.gap = r.at("gap").get<double>();
      rd.speed = r.at("speed").get<double>();
      rd.lane_offset = r.at("lane_offset").get<double>();
      rd.class_evidence = r.at("class_evidence").get<double>();
      rd.intensity = r.at("intensity").get<double>();
      s.frame.slots.emplace_back(rd);
    }
  }
  s.frame.sources = j.at("sources").get<std::vector<int>>();
  if (s.frame.sources.size() != s.frame.slots.size())
    throw std::invalid_argument("sources and slots differ in length");
  s.frame.fog = j.at("fog").get<double>();

  for (const auto& dj : j.at("detections")) {
    SlotDetection d;
    const auto tokens = dj.at("tokens").get<std::vector<int>>();
    if (tokens.empty() || tokens.size() > static_cast<std::size_t>(kNumHeads))
      throw std::invalid_argument("a detection needs 1 to 4 tokens");
    for (std::size_t k = 0; k < tokens.size(); ++k) d.tokens.tokens[k] = tokens[k];
    d.tokens.count = static_cast<int>(tokens.size());
    d.prob = dj.at("prob").get<std::array<double, kNumHeads>>();
    d.logprob = dj.at("logprob").get<std::array<double, kNumHeads>>();
    if (!dj.at("object").is_null()) d.object = object_from(dj.at("object"));
    s.detections.slots.push_back(d);
  }
  s.command.accel = j.at("accel").get<double>();
  const auto v = j.at("violations").get<std::array<double, kNumRules>>();
  for (int k = 0; k < kNumRules; ++k) s.violations(k) = v[static_cast<std::size_t>(k)];
  return s;
}

}  // namespace

void write_trajectory_log(std::ostream& out, const TrajectoryRecord& record,
                          const VehicleParams& vehicle) {
  const json header = {{"format", kTrajectoryFormat}, {"version", kTrajectoryVersion},
                       {"seed", record.seed},         {"fog", record.fog},
                       {"n_slots", record.n_slots},   {"vehicle", to_json(vehicle)}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < record.steps.size(); ++t)
    out << step_to_json(t, record.steps[t]).dump() << '\n';
}

std::string trajectory_log_string(const TrajectoryRecord& record, const VehicleParams& vehicle) {
  std::ostringstream os;
  write_trajectory_log(os, record, vehicle);
  return os.str();
}

TrajectoryLog read_trajectory_log(std::istream& in) {
  TrajectoryLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw LogParseError(lineno, "empty line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogParseError(lineno, std::string("malformed record: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object() || j.value("format", "") != kTrajectoryFormat)
          throw std::invalid_argument("missing trajectory log header");
        if (j.at("version").get<int>() != kTrajectoryVersion)
          throw std::invalid_argument("unsupported log version " +
                                      std::to_string(j.at("version").get<int>()));
        log.record.seed = j.at("seed").get<std::uint64_t>();
        log.record.fog = j.at("fog").get<double>();
        log.record.n_slots = j.at("n_slots").get<int>();
        log.vehicle = vehicle_from(j.at("vehicle"));
        have_header = true;
      } else {
        log.record.steps.push_back(step_from(j, log.record.steps.size()));
      }
    } catch (const LogParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw LogParseError(lineno, e.what());
    }
  }
  if (!have_header) throw LogParseError(lineno + 1, "empty log");
  if (log.record.steps.empty()) throw LogParseError(lineno + 1, "log has no step records");
  return log;
}

TrajectoryLog load_trajectory_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trajectory log '" + path + "'");
  return read_trajectory_log(in);
}

}  // namespace safeperc

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

#include "safeperc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>
#include <variant>

namespace safeperc {
namespace {

using nlohmann::json;

using FieldRef = std::variant<double*, int*, bool*, std::uint64_t*, std::string*,
                              std::vector<double>*, std::array<double, 3>*>;
using Fields = std::vector<std::pair<const char*, FieldRef>>;

Fields fields(ScenarioConfig& c) {
  return {{"n_lanes", &c.n_lanes},
          {"n_objects", &c.n_objects},
          {"pedestrian_fraction", &c.pedestrian_fraction},
          {"fog", &c.fog},
          {"horizon", &c.horizon},
          {"dt", &c.dt},
          {"behavior_mix", &c.behavior_mix},
          {"compliant_start", &c.compliant_start},
          {"spawn_retries", &c.spawn_retries},
          {"pedestrian_depth", &c.pedestrian_depth},
          {"vehicle_depth", &c.vehicle_depth},
          {"object_max_brake", &c.object_max_brake},
          {"random_brake_start_prob", &c.random_brake_start_prob}};
}

Fields fields(VehicleParams& p) {
  return {{"a_max", &p.a_max},     {"a_min", &p.a_min},     {"a_brake", &p.a_brake},
          {"v_lim", &p.v_lim},     {"dt", &p.dt},           {"tau", &p.tau},
          {"epsilon", &p.epsilon}, {"r", &p.progress_ratio}, {"ego_length", &p.ego_length}};
}

Fields fields(NoiseModel& n) {
  return {{"sigma_gap0", &n.sigma_gap0},
          {"sigma_speed0", &n.sigma_speed0},
          {"sigma_lane0", &n.sigma_lane0},
          {"sigma_class0", &n.sigma_class0},
          {"miss0", &n.miss0},
          {"fog_sigma_scale", &n.fog_sigma_scale},
          {"fog_miss_scale", &n.fog_miss_scale},
          {"miss_cap", &n.miss_cap},
          {"intensity_real", &n.intensity_real},
          {"intensity_clutter", &n.intensity_clutter},
          {"sigma_intensity", &n.sigma_intensity},
          {"fog_intensity_scale", &n.fog_intensity_scale},
          {"clutter_rate", &n.clutter_rate},
          {"max_clutter", &n.max_clutter},
          {"sensor_range", &n.sensor_range}};
}

Fields fields(Vocabulary& v) {
  return {{"n_distance", &v.n_distance}, {"distance_lo", &v.distance_lo},
          {"distance_hi", &v.distance_hi}, {"n_speed", &v.n_speed},
          {"speed_lo", &v.speed_lo},       {"speed_hi", &v.speed_hi}};
}

Fields fields(ModelConfig& m) {
  return {{"hidden_layer", &m.hidden_layer},
          {"hidden_width", &m.hidden_width},
          {"init_scale", &m.init_scale}};
}

Fields fields(TrainConfig& t) {
  return {{"max_epoch", &t.max_epoch},         {"max_traj", &t.max_traj},
          {"horizon", &t.horizon},             {"learning_rate", &t.learning_rate},
          {"grad_clip", &t.grad_clip},         {"scenario_pool", &t.scenario_pool}};
}

Fields fields(RewardConfig& r) {
  return {{"beta", &r.beta},
          {"w_percp", &r.w_percp},
          {"match_threshold", &r.match_threshold},
          {"gamma", &r.gamma}};
}

Fields fields(PretrainConfig& p) {
  return {{"episodes", &p.episodes},
          {"steps", &p.steps},
          {"batch_slots", &p.batch_slots},
          {"learning_rate", &p.learning_rate}};
}

Fields fields(EvalConfig& e) {
  return {{"fog_levels", &e.fog_levels},
          {"episodes", &e.episodes},
          {"match_threshold", &e.match_threshold}};
}

Fields fields(PathsConfig& p) {
  return {{"init_checkpoint", &p.init_checkpoint}, {"log_dir", &p.log_dir}};
}

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
  throw ConfigError("config key '" + key + "' must be " + expected);
}

void read_field(const json& v, const std::string& key, const FieldRef& ref) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          if (!v.is_number()) bad_type(key, "a number");
          *p = v.get<double>();
        } else if constexpr (std::is_same_v<T, int>) {
          if (!v.is_number_integer()) bad_type(key, "an integer");
          *p = v.get<int>();
        } else if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) bad_type(key, "true or false");
          *p = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (!v.is_number_unsigned()) bad_type(key, "a non-negative integer");
          *p = v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!v.is_string()) bad_type(key, "a string");
          *p = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          if (!v.is_array()) bad_type(key, "an array of numbers");
          p->clear();
          for (const auto& x : v) {
            if (!x.is_number()) bad_type(key, "an array of numbers");
            p->push_back(x.get<double>());
          }
        } else {
          if (!v.is_array() || v.size() != p->size()) bad_type(key, "an array of 3 numbers");
          for (std::size_t i = 0; i < p->size(); ++i) {
            if (!v[i].is_number()) bad_type(key, "an array of 3 numbers");
            (*p)[i] = v[i].get<double>();
          }
        }
      },
      ref);
}

json write_field(const FieldRef& ref) {
  return std::visit([](auto* p) { return json(*p); }, ref);
}

template <typename T>
void read_section(const json& root, const char* name, T& target) {
  if (!root.contains(name)) return;
  const json& sec = root.at(name);
  if (!sec.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  const Fields fs = fields(target);
  for (const auto& [key, value] : sec.items()) {
    const std::string path = std::string(name) + "." + key;
    bool known = false;
    for (const auto& [fname, ref] : fs) {
      if (key == fname) {
        read_field(value, path, ref);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key '" + path + "'");
  }
}

template <typename T>
json write_section(const T& source) {
  T copy = source;
  json sec = json::object();
  for (const auto& [name, ref] : fields(copy)) sec[name] = write_field(ref);
  return sec;
}

constexpr const char* kSections[] = {"scenario", "vehicle", "noise",    "vocab", "model",
                                     "train",    "reward",  "pretrain", "eval",  "paths"};

template <typename Fn>
void rethrow_as_config(const char* section, Fn&& fn) {
  try {
    fn();
  } catch (const InvariantError& e) {
    throw ConfigError(std::string("invalid ") + section + " config: " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("invalid config: workers must be >= 1");
  if (n_slots < 1) throw ConfigError("invalid config: n_slots must be >= 1");
  rethrow_as_config("scenario", [&] { scenario.validate(); });
  rethrow_as_config("vehicle", [&] { vehicle.validate(); });
  rethrow_as_config("noise", [&] { noise.validate(); });
  rethrow_as_config("vocab", [&] { vocab.validate(); });
  if (model.hidden_width < 1 || !(model.init_scale >= 0.0))
    throw ConfigError("invalid model config: hidden_width must be >= 1 and init_scale >= 0");
  rethrow_as_config("train", [&] { train.validate(); });
  rethrow_as_config("reward", [&] { reward.validate(); });
  rethrow_as_config("pretrain", [&] { pretrain.validate(); });
  rethrow_as_config("eval", [&] { eval.validate(); });
  if (scenario.dt != vehicle.dt)
    throw ConfigError("invalid config: scenario.dt and vehicle.dt differ");
  if (!seeds_disjoint(eval_config(), training_seeds()))
    throw ConfigError("invalid config: evaluation seeds overlap training seeds");
}

Architecture RunConfig::architecture() const {
  Architecture a;
  a.vocab = vocab;
  a.hidden_layer = model.hidden_layer;
  a.hidden_width = model.hidden_width;
  return a;
}

EpisodeSettings RunConfig::episode_settings() const {
  EpisodeSettings s;
  s.scenario = scenario;
  s.scenario.seed = seed;
  s.params = vehicle;
  s.noise = noise;
  s.n_slots = n_slots;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.workers = workers;
  return t;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p = pretrain;
  p.seed = seed + kPretrainSeedOffset;
  return p;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e = eval;
  e.seed_base = seed + kEvalSeedOffset;
  e.workers = workers;
  return e;
}

std::vector<std::uint64_t> RunConfig::training_seeds() const {
  std::vector<std::uint64_t> out;
  const TrainConfig t = train_config();
  for (int e = 0; e < t.max_epoch; ++e) {
    for (int k = 0; k < t.max_traj; ++k) out.push_back(t.rollout_seed(e, k));
  }
  const PretrainConfig p = pretrain_config();
  for (int e = 0; e < p.episodes; ++e) out.push_back(p.seed + static_cast<std::uint64_t>(e));
  return out;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  json j = json::object();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["n_slots"] = cfg.n_slots;
  j["scenario"] = write_section(cfg.scenario);
  j["vehicle"] = write_section(cfg.vehicle);
  j["noise"] = write_section(cfg.noise);
  j["vocab"] = write_section(cfg.vocab);
  j["model"] = write_section(cfg.model);
  j["train"] = write_section(cfg.train);
  j["reward"] = write_section(cfg.reward);
  j["pretrain"] = write_section(cfg.pretrain);
  j["eval"] = write_section(cfg.eval);
  j["paths"] = write_section(cfg.paths);
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      read_field(value, key, &cfg.seed);
    } else if (key == "workers") {
      read_field(value, key, &cfg.workers);
    } else if (key == "n_slots") {
      read_field(value, key, &cfg.n_slots);
    } else if (std::find(std::begin(kSections), std::end(kSections), key) == std::end(kSections)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  read_section(j, "scenario", cfg.scenario);
  read_section(j, "vehicle", cfg.vehicle);
  read_section(j, "noise", cfg.noise);
  read_section(j, "vocab", cfg.vocab);
  read_section(j, "model", cfg.model);
  read_section(j, "train", cfg.train);
  read_section(j, "reward", cfg.reward);
  read_section(j, "pretrain", cfg.pretrain);
  read_section(j, "eval", cfg.eval);
  read_section(j, "paths", cfg.paths);
  cfg.validate();
  return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override key '" + key + "' does not name a section");
    start = dot + 1;
  }
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string dump_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

}  // namespace safeperc

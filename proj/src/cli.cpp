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

#include "safeperc/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "safeperc/config.hpp"
#include "safeperc/evaluation.hpp"
#include "safeperc/trajlog.hpp"

namespace safeperc {
namespace fs = std::filesystem;

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,loss_total,loss_pc,loss_rb,rb1,rb2,rb3,rb4,wall_time_s\n";
  os << std::setprecision(17);
  for (const auto& row : log) {
    os << row.epoch << ',' << row.loss_total << ',' << row.loss_pc << ',' << row.loss_rb;
    for (int k = 0; k < kNumRules; ++k) os << ',' << row.violations(k);
    os << ',' << row.wall_time_s << '\n';
  }
  return os.str();
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<int> workers;
  std::optional<std::string> log_dir;
};

RunConfig resolve_config(const Common& c) {
  std::vector<std::string> overrides;
  if (const char* d = std::getenv("SAFEPERC_LOG_DIR"); d && *d)
    overrides.push_back(std::string("paths.log_dir=\"") + d + "\"");
  if (const char* w = std::getenv("SAFEPERC_WORKERS"); w && *w)
    overrides.push_back(std::string("workers=") + w);
  overrides.insert(overrides.end(), c.overrides.begin(), c.overrides.end());
  if (c.workers) overrides.push_back("workers=" + std::to_string(*c.workers));
  if (c.log_dir) overrides.push_back("paths.log_dir=\"" + *c.log_dir + "\"");
  if (c.config_path.empty()) return parse_config("{}", overrides);
  return load_config(c.config_path, overrides);
}

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("-c,--config", c.config_path, "JSON run configuration");
  if (config_required) opt->required();
  app->add_option("--set", c.overrides, "Override a config key, e.g. --set train.max_epoch=5");
  app->add_option("--workers", c.workers, "Parallel rollout/evaluation workers");
  app->add_option("--log-dir", c.log_dir, "Output directory root");
}

PolicyParams initial_params(const RunConfig& cfg, std::ostream& out) {
  const Architecture arch = cfg.architecture();
  if (!cfg.paths.init_checkpoint.empty()) {
    PolicyParams theta = load_checkpoint(cfg.paths.init_checkpoint, cfg.vocab);
    if (!(theta.arch() == arch))
      throw ConfigError("init checkpoint architecture does not match the model config");
    return theta;
  }
  Rng rng = make_rng(cfg.seed, kInitStream);
  const PolicyParams theta0 = PolicyParams::random(arch, cfg.model.init_scale, rng);
  out << "warm start: " << cfg.pretrain.steps << " steps on " << cfg.pretrain.episodes
      << " ground-truth episodes\n";
  return pretrain(theta0, cfg.pretrain_config(), cfg.episode_settings());
}

std::string epoch_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

int cmd_train(const Common& c, const std::string& name, bool timing, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  const fs::path dir = fs::path(cfg.paths.log_dir) / name;
  fs::create_directories(dir / "checkpoints");
  write_file_atomic((dir / "config.json").string(), dump_config(cfg));

  const PolicyParams theta0 = initial_params(cfg, out);
  save_checkpoint((dir / "initial.ckpt").string(), theta0);

  TrainHooks hooks;
  hooks.record_wall_time = timing;
  hooks.on_epoch = [&](const EpochLog& row, const PolicyParams& theta) {
    save_checkpoint((dir / "checkpoints" / epoch_name(row.epoch)).string(), theta);
    out << "epoch " << row.epoch << " loss " << row.loss_total << " (pc " << row.loss_pc
        << ", rb " << row.loss_rb << ") violations " << row.violations.sum() << '\n';
  };
  const TrainResult result =
      train(theta0, cfg.train_config(), cfg.reward, cfg.episode_settings(), hooks);
  write_file_atomic((dir / "train_log.csv").string(), training_log_csv(result.log));
  save_checkpoint((dir / "final.ckpt").string(), result.theta);
  out << "wrote " << (dir / "final.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::vector<std::string>& models, bool ground_truth,
                 bool blind, const std::string& csv_path, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  if (models.empty() && !ground_truth && !blind)
    throw CLI::ValidationError("evaluate", "give at least one --model, --ground-truth or --blind");
  const EpisodeSettings settings = cfg.episode_settings();
  const EvalConfig eval = cfg.eval_config();
  EvalReport report;
  if (ground_truth) {
    const GroundTruthPerception p(settings.params, settings.noise, cfg.vocab);
    report.append(evaluate(p, "truth", settings, eval));
  }
  if (blind) report.append(evaluate(BlindPerception{}, "blind", settings, eval));
  for (const auto& spec : models) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw CLI::ValidationError("--model", "expected name=checkpoint, got '" + spec + "'");
    const PolicyParams theta = load_checkpoint(spec.substr(eq + 1), cfg.vocab);
    const PolicyPerception p(theta, PolicyPerception::Mode::kArgmax, settings.params.ego_length);
    report.append(evaluate(p, spec.substr(0, eq), settings, eval));
  }
  print_report_table(out, report);
  const fs::path path = csv_path.empty() ? fs::path(cfg.paths.log_dir) / "eval_report.csv"
                                         : fs::path(csv_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file_atomic(path.string(), csv.str());
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_score(const std::string& log_path, const Common& c, std::ostream& out) {
  const TrajectoryLog log = load_trajectory_log(log_path);
  const VehicleParams params = c.config_path.empty() ? log.vehicle : resolve_config(c).vehicle;
  const ViolationVector v = score_realization(log.record.realization(), params);
  out << std::setprecision(17) << "rb1 " << v(0) << "\nrb2 " << v(1) << "\nrb3 " << v(2)
      << "\nrb4 " << v(3) << "\ntotal " << v.sum() << '\n';
  return kExitOk;
}

int cmd_simulate(const Common& c, const std::string& perception, const std::string& checkpoint,
                 const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  const EpisodeSettings settings = cfg.episode_settings();
  std::unique_ptr<Perception> p;
  std::optional<PolicyParams> theta;
  if (perception == "truth") {
    p = std::make_unique<GroundTruthPerception>(settings.params, settings.noise, cfg.vocab);
  } else if (perception == "blind") {
    p = std::make_unique<BlindPerception>();
  } else {
    if (checkpoint.empty())
      throw CLI::ValidationError("--checkpoint", "required with --perception " + perception);
    theta = load_checkpoint(checkpoint, cfg.vocab);
    p = std::make_unique<PolicyPerception>(
        *theta, perception == "sample" ? PolicyPerception::Mode::kSample
                                       : PolicyPerception::Mode::kArgmax,
        settings.params.ego_length);
  }
  const TrajectoryRecord rec = run_episode(settings, *p);
  const fs::path path = out_path.empty()
                            ? fs::path(cfg.paths.log_dir) /
                                  ("trajectory_" + std::to_string(cfg.seed) + ".jsonl")
                            : fs::path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path.string(), trajectory_log_string(rec, settings.params));
  const ViolationVector v = rec.totals();
  out << "violations " << v(0) << ' ' << v(1) << ' ' << v(2) << ' ' << v(3) << "\nwrote "
      << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Safety-aware perception training on a longitudinal driving simulator"};
  app.require_subcommand(1);

  Common train_c, eval_c, score_c, sim_c;
  std::string variant = "train";
  bool timing = false;
  auto* train_cmd = app.add_subcommand("train", "Warm-start and fine-tune the detector");
  add_common(train_cmd, train_c, false);
  train_cmd->add_option("--name", variant, "Run name (output subdirectory)");
  train_cmd->add_flag("--timing", timing, "Record wall-clock seconds per epoch");

  std::vector<std::string> models;
  bool ground_truth = false, blind = false;
  std::string report_path;
  auto* eval_cmd = app.add_subcommand("evaluate", "Violation and accuracy tables over fog levels");
  add_common(eval_cmd, eval_c, false);
  eval_cmd->add_option("--model", models, "name=checkpoint (repeatable)");
  eval_cmd->add_flag("--ground-truth", ground_truth, "Include the ground-truth detector");
  eval_cmd->add_flag("--blind", blind, "Include a detector that reports nothing");
  eval_cmd->add_option("--out", report_path, "CSV report path");

  std::string log_path;
  auto* score_cmd = app.add_subcommand("score", "Apply the rulebook to a trajectory log");
  score_cmd->add_option("log", log_path, "Trajectory log (.jsonl)")->required();
  score_cmd->add_option("-c,--config", score_c.config_path,
                        "Score with this config's vehicle parameters instead of the log's");
  score_cmd->add_option("--set", score_c.overrides, "Override a config key");

  std::string perception = "truth", checkpoint, traj_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Roll one episode and write its trajectory log");
  add_common(sim_cmd, sim_c, false);
  sim_cmd->add_option("--perception", perception, "truth, blind, argmax or sample")
      ->check(CLI::IsMember({"truth", "blind", "argmax", "sample"}));
  sim_cmd->add_option("--checkpoint", checkpoint, "Detector checkpoint for argmax/sample");
  sim_cmd->add_option("--out", traj_out, "Trajectory log path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_c, variant, timing, out);
    if (*eval_cmd)
      return cmd_evaluate(eval_c, models, ground_truth, blind, report_path, out);
    if (*score_cmd) return cmd_score(log_path, score_c, out);
    if (*sim_cmd) return cmd_simulate(sim_c, perception, checkpoint, traj_out, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace safeperc

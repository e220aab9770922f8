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

#include "safeperc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>
#include <ostream>
#include <thread>

#include "safeperc/trainer.hpp"

namespace safeperc {

void EvalConfig::validate() const {
  if (fog_levels.empty()) throw InvariantError("fog_levels must not be empty");
  for (double f : fog_levels) {
    if (!(f >= 0.0 && f <= 100.0)) throw InvariantError("fog levels must lie in [0, 100]");
  }
  if (episodes < 1) throw InvariantError("eval episodes must be >= 1");
  if (!(match_threshold > 0.0 && match_threshold <= 1.0))
    throw InvariantError("match_threshold must lie in (0, 1]");
  if (workers < 1) throw InvariantError("workers must be >= 1");
}

AccuracyCounts& AccuracyCounts::operator+=(const AccuracyCounts& o) {
  prioritized_total += o.prioritized_total;
  prioritized_correct += o.prioritized_correct;
  other_total += o.other_total;
  other_correct += o.other_correct;
  return *this;
}

namespace {
std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

std::optional<double> AccuracyCounts::prioritized() const {
  return ratio(prioritized_correct, prioritized_total);
}
std::optional<double> AccuracyCounts::non_prioritized() const {
  return ratio(other_correct, other_total);
}
std::optional<double> AccuracyCounts::overall() const {
  return ratio(prioritized_correct + other_correct, prioritized_total + other_total);
}

AccuracyCounts prioritized_accuracy(const TrajectoryRecord& record, const VehicleParams& params,
                                    const NoiseModel& noise, double match_threshold) {
  AccuracyCounts counts;
  for (const auto& step : record.steps) {
    std::vector<SceneObject> truths;
    for (const auto& o : step.world.objects) {
      if (in_sensor_range(step.world.ego, o, noise, params.ego_length)) truths.push_back(o);
    }
    if (truths.empty()) continue;
    const std::vector<SceneObject> dets = step.detections.objects();
    const auto matches = match_detections(dets, truths, match_threshold);
    std::vector<bool> found(truths.size(), false);
    for (const auto& m : matches) {
      if (m) found[m->truth] = true;
    }
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (is_prioritized(step.world.ego, truths[i])) {
        ++counts.prioritized_total;
        counts.prioritized_correct += found[i] ? 1 : 0;
      } else {
        ++counts.other_total;
        counts.other_correct += found[i] ? 1 : 0;
      }
    }
  }
  return counts;
}

AccuracyCounts prioritized_accuracy(const std::vector<TrajectoryRecord>& records,
                                    const VehicleParams& params, const NoiseModel& noise,
                                    double match_threshold) {
  AccuracyCounts total;
  for (const auto& r : records) total += prioritized_accuracy(r, params, noise, match_threshold);
  return total;
}

const EvalCell* EvalReport::find(const std::string& variant, double fog) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.fog == fog) return &c;
  }
  return nullptr;
}

void EvalReport::append(const EvalReport& other) {
  cells.insert(cells.end(), other.cells.begin(), other.cells.end());
}

EvalReport evaluate(const Perception& perception, const std::string& variant,
                    const EpisodeSettings& base, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  for (double fog : cfg.fog_levels) {
    const auto n = static_cast<std::size_t>(cfg.episodes);
    std::vector<ViolationVector> totals(n, zero_violations());
    std::vector<AccuracyCounts> acc(n);

    auto run_one = [&](std::size_t e) {
      EpisodeSettings s = base;
      s.scenario.seed = cfg.episode_seed(static_cast<int>(e));
      s.scenario.fog = fog;
      const TrajectoryRecord rec = run_episode(s, perception);
      totals[e] = rec.totals();
      acc[e] = prioritized_accuracy(rec, s.params, s.noise, cfg.match_threshold);
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n);
    if (workers <= 1) {
      for (std::size_t e = 0; e < n; ++e) run_one(e);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t e = w; e < n; e += workers) run_one(e);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }

    EvalCell cell;
    cell.variant = variant;
    cell.fog = fog;
    cell.episodes = cfg.episodes;
    for (std::size_t e = 0; e < n; ++e) {
      cell.totals += totals[e];
      cell.accuracy += acc[e];
    }
    report.cells.push_back(cell);
  }
  return report;
}

bool seeds_disjoint(const EvalConfig& eval, const std::vector<std::uint64_t>& used) {
  for (int e = 0; e < eval.episodes; ++e) {
    if (std::find(used.begin(), used.end(), eval.episode_seed(e)) != used.end()) return false;
  }
  return true;
}

namespace {
std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}
}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "variant,fog,episodes,rb1,rb2,rb3,rb4,total,prioritized_acc,non_prioritized_acc,"
         "prioritized_count,non_prioritized_count\n";
  out << std::setprecision(17);
  for (const auto& c : report.cells) {
    out << c.variant << ',' << c.fog << ',' << c.episodes;
    for (int k = 0; k < kNumRules; ++k) out << ',' << c.totals(k);
    out << ',' << c.grand_total() << ',' << fmt_opt(c.accuracy.prioritized()) << ','
        << fmt_opt(c.accuracy.non_prioritized()) << ',' << c.accuracy.prioritized_total << ','
        << c.accuracy.other_total << '\n';
  }
}

void print_report_table(std::ostream& out, const EvalReport& report) {
  const auto acc = [](const std::optional<double>& v) {
    std::ostringstream os;
    if (v) {
      os << std::fixed << std::setprecision(3) << *v;
    } else {
      os << "-";
    }
    return os.str();
  };
  out << std::left << std::setw(10) << "variant" << std::right << std::setw(6) << "fog"
      << std::setw(12) << "rb1" << std::setw(12) << "rb2" << std::setw(12) << "rb3"
      << std::setw(12) << "rb4" << std::setw(12) << "total" << std::setw(10) << "acc_prio"
      << std::setw(10) << "acc_other" << '\n';
  for (const auto& c : report.cells) {
    out << std::left << std::setw(10) << c.variant << std::right << std::setw(6)
        << std::setprecision(0) << std::fixed << c.fog << std::setprecision(2);
    for (int k = 0; k < kNumRules; ++k) out << std::setw(12) << c.totals(k);
    out << std::setw(12) << c.grand_total() << std::setw(10) << acc(c.accuracy.prioritized())
        << std::setw(10) << acc(c.accuracy.non_prioritized()) << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace safeperc

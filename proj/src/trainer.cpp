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

#include "safeperc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>

#include "safeperc/controller.hpp"

namespace safeperc {
namespace {

constexpr double kCommandTolerance = 1e-12;

std::vector<SceneObject> truths_in_range(const StepRecord& step, const VehicleParams& params,
                                         const NoiseModel& noise) {
  std::vector<SceneObject> out;
  for (const auto& o : step.world.objects) {
    if (in_sensor_range(step.world.ego, o, noise, params.ego_length)) out.push_back(o);
  }
  return out;
}

void require_aligned(const StepRecord& step) {
  if (step.detections.slots.size() != step.frame.slots.size())
    throw std::invalid_argument("detections are not aligned with sensor slots");
}

// Decoded perceived set with `slot` replaced by its ground-truth tokens.
std::vector<SceneObject> counterfactual_objects(const StepRecord& step, std::size_t slot,
                                                const SlotTokens& truth,
                                                const VehicleParams& params,
                                                const Vocabulary& vocab) {
  std::vector<SceneObject> out;
  for (std::size_t s = 0; s < step.detections.slots.size(); ++s) {
    if (s == slot) {
      if (truth.present())
        out.push_back(decode_object(truth, step.frame.slots[s], step.world.ego, vocab,
                                    params.ego_length, static_cast<int>(s)));
    } else if (step.detections.slots[s].object) {
      out.push_back(*step.detections.slots[s].object);
    }
  }
  return out;
}

bool command_changes(const StepRecord& step, std::size_t slot, const SlotTokens& truth,
                     const VehicleParams& params, const Vocabulary& vocab) {
  const auto cf = counterfactual_objects(step, slot, truth, params, vocab);
  const double u = ctrl(cf, step.world.ego, params).accel;
  return std::abs(u - step.command.accel) > kCommandTolerance;
}

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void RewardConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvariantError("beta must lie in [0, 1]");
  if (!(w_percp >= 0.0)) throw InvariantError("w_percp must be >= 0");
  if (!(match_threshold > 0.0 && match_threshold <= 1.0))
    throw InvariantError("match_threshold must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvariantError("gamma must lie in [0, 1]");
}

void TrainConfig::validate() const {
  if (max_epoch < 0) throw InvariantError("max_epoch must be >= 0");
  if (max_traj < 1) throw InvariantError("max_traj must be >= 1");
  if (horizon < 1) throw InvariantError("horizon must be >= 1");
  if (!(learning_rate > 0.0)) throw InvariantError("learning_rate must be > 0");
  if (!(grad_clip > 0.0)) throw InvariantError("grad_clip must be > 0");
  if (workers < 1) throw InvariantError("workers must be >= 1");
  if (scenario_pool < 0) throw InvariantError("scenario_pool must be >= 0");
}

std::uint64_t TrainConfig::rollout_seed(int epoch, int traj) const {
  const auto k = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(max_traj) +
                 static_cast<std::uint64_t>(traj);
  return seed + (scenario_pool > 0 ? k % static_cast<std::uint64_t>(scenario_pool) : k);
}

double interval_iou(const SceneObject& a, const SceneObject& b) {
  const double a0 = a.position - 0.5 * a.depth, a1 = a.position + 0.5 * a.depth;
  const double b0 = b.position - 0.5 * b.depth, b1 = b.position + 0.5 * b.depth;
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {
bool comparable(const SceneObject& det, const SceneObject& truth) {
  return det.lane == truth.lane && det.kind == truth.kind;
}
}  // namespace

std::optional<Match> match_detection(const SceneObject& det,
                                     std::span<const SceneObject> truths,
                                     double threshold) {
  std::optional<Match> best;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (!comparable(det, truths[i])) continue;
    const double iou = interval_iou(det, truths[i]);
    if (iou >= threshold && (!best || iou > best->iou)) best = Match{i, iou};
  }
  return best;
}

std::vector<std::optional<Match>> match_detections(std::span<const SceneObject> dets,
                                                   std::span<const SceneObject> truths,
                                                   double threshold) {
  struct Pair {
    double iou;
    std::size_t det;
    std::size_t truth;
  };
  std::vector<Pair> pairs;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (!comparable(dets[d], truths[t])) continue;
      const double iou = interval_iou(dets[d], truths[t]);
      if (iou >= threshold) pairs.push_back({iou, d, t});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.det != b.det) return a.det < b.det;
    return a.truth < b.truth;
  });
  std::vector<std::optional<Match>> out(dets.size());
  std::vector<bool> taken(truths.size(), false);
  for (const auto& p : pairs) {
    if (out[p.det] || taken[p.truth]) continue;
    out[p.det] = Match{p.truth, p.iou};
    taken[p.truth] = true;
  }
  return out;
}

std::vector<SlotTokens> ground_truth_tokens(const StepRecord& step,
                                            const VehicleParams& params,
                                            const Vocabulary& vocab) {
  std::vector<SlotTokens> out;
  out.reserve(step.frame.sources.size());
  for (int source : step.frame.sources) {
    const SceneObject* truth = nullptr;
    for (const auto& o : step.world.objects) {
      if (o.id == source) truth = &o;
    }
    out.push_back(truth ? encode_object(*truth, gap(step.world.ego, *truth, params.ego_length),
                                        vocab)
                        : absent_tokens());
  }
  return out;
}

std::vector<bool> detection_correctness(const StepRecord& step,
                                        const VehicleParams& params,
                                        const NoiseModel& noise,
                                        const Vocabulary& vocab,
                                        double match_threshold) {
  require_aligned(step);
  const auto truth_tokens = ground_truth_tokens(step, params, vocab);
  const auto truths = truths_in_range(step, params, noise);

  std::vector<SceneObject> dets;
  std::vector<std::size_t> det_slot;
  for (std::size_t s = 0; s < step.detections.slots.size(); ++s) {
    if (step.detections.slots[s].object) {
      dets.push_back(*step.detections.slots[s].object);
      det_slot.push_back(s);
    }
  }
  const auto matches = match_detections(dets, truths, match_threshold);

  std::vector<bool> correct(step.detections.slots.size(), false);
  for (std::size_t s = 0; s < correct.size(); ++s)
    correct[s] = !step.detections.slots[s].tokens.present() && !truth_tokens[s].present();
  for (std::size_t i = 0; i < dets.size(); ++i) correct[det_slot[i]] = matches[i].has_value();
  return correct;
}

ViolationVector attribute_violation(const TrajectoryRecord& record, std::size_t t,
                                    std::size_t slot, const VehicleParams& params,
                                    const NoiseModel& noise, const Vocabulary& vocab,
                                    const RewardConfig& reward) {
  if (t >= record.steps.size()) throw std::out_of_range("attribute_violation: step out of range");
  const StepRecord& step = record.steps[t];
  require_aligned(step);
  if (slot >= step.detections.slots.size())
    throw std::out_of_range("attribute_violation: slot out of range");
  const auto correct = detection_correctness(step, params, noise, vocab, reward.match_threshold);
  if (correct[slot]) return zero_violations();
  const auto truth = ground_truth_tokens(step, params, vocab);
  if (!command_changes(step, slot, truth[slot], params, vocab)) return zero_violations();
  const auto per_state = record.per_state_violations();
  return discounted_suffix(per_state, t, reward.gamma);
}

std::vector<StepTargets> assign_rewards(const TrajectoryRecord& record,
                                        const RewardConfig& reward,
                                        const VehicleParams& params,
                                        const NoiseModel& noise,
                                        const Vocabulary& vocab) {
  reward.validate();
  const auto per_state = record.per_state_violations();
  // Suffix sums from the back; gamma = 1 keeps the forward summation order of
  // score_suffix so both agree exactly.
  std::vector<ViolationVector> suffix(per_state.size());
  for (std::size_t t = 0; t < per_state.size(); ++t)
    suffix[t] = discounted_suffix(per_state, t, reward.gamma);

  std::vector<StepTargets> out(record.steps.size());
  for (std::size_t t = 0; t < record.steps.size(); ++t) {
    const StepRecord& step = record.steps[t];
    const auto correct = detection_correctness(step, params, noise, vocab, reward.match_threshold);
    const auto truth = ground_truth_tokens(step, params, vocab);
    StepTargets& targets = out[t];
    targets.resize(step.detections.slots.size());
    for (std::size_t s = 0; s < targets.size(); ++s) {
      TrainingTarget& tt = targets[s];
      tt.correct = correct[s];
      tt.r_pc = reward.w_percp;
      if (correct[s]) {
        tt.tokens = step.detections.slots[s].tokens;
      } else {
        tt.tokens = truth[s];
        tt.substituted = true;
        if (suffix[t].sum() > 0.0 && command_changes(step, s, truth[s], params, vocab))
          tt.r_rb = suffix[t].sum();
      }
      const double r = reward.beta * tt.r_pc + (1.0 - reward.beta) * tt.r_rb;
      tt.reward.fill(0.0);
      for (int k = 0; k < tt.tokens.count; ++k) tt.reward[static_cast<std::size_t>(k)] = r;
    }
  }
  return out;
}

double clip_global_norm(Eigen::VectorXd& g, double clip) {
  const double norm = g.norm();
  if (norm > clip) g *= clip / norm;
  return norm;
}

void ascent_step(PolicyParams& theta, Eigen::VectorXd g, double lr, double clip) {
  if (!g.allFinite()) throw NumericError("non-finite gradient");
  if (g.squaredNorm() == 0.0) return;
  clip_global_norm(g, clip);
  theta.flat() += lr * g;
  if (!theta.flat().allFinite()) throw NumericError("non-finite parameters after update");
}

TrajectoryLoss trajectory_loss(const PolicyParams& theta, const TrajectoryRecord& record,
                               std::span<const StepTargets> targets,
                               const RewardConfig& reward) {
  if (targets.size() != record.steps.size())
    throw std::invalid_argument("trajectory_loss: targets not aligned with steps");
  const Vocabulary& vocab = theta.arch().vocab;
  TrajectoryLoss out;
  out.grad = Eigen::VectorXd::Zero(theta.flat().size());
  double value = 0.0, value_pc = 0.0, value_rb = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Eigen::MatrixXd feats = featurize(record.steps[t].frame, vocab);
    std::vector<SlotTokens> tokens;
    std::vector<TokenRewards> rewards;
    for (const auto& tt : targets[t]) {
      tokens.push_back(tt.tokens);
      rewards.push_back(tt.reward);
      out.tokens += static_cast<std::size_t>(tt.tokens.count);
    }
    const LogProbGrad lg = logprob_and_grad(theta, feats, tokens, rewards);
    value += lg.value;
    out.grad += lg.grad;
    const auto lp = token_logprobs(theta, feats, tokens);
    for (std::size_t s = 0; s < targets[t].size(); ++s) {
      const auto& tt = targets[t][s];
      double slot_lp = 0.0;
      for (int k = 0; k < tt.tokens.count; ++k) slot_lp += lp[s][static_cast<std::size_t>(k)];
      value_pc += reward.beta * tt.r_pc * slot_lp;
      value_rb += (1.0 - reward.beta) * tt.r_rb * slot_lp;
    }
  }
  if (out.tokens > 0) {
    const double n = static_cast<double>(out.tokens);
    out.total = -value / n;
    out.perception = -value_pc / n;
    out.rulebook = -value_rb / n;
    out.grad /= n;
  }
  if (!std::isfinite(out.total) || !out.grad.allFinite())
    throw NumericError("non-finite trajectory loss or gradient");
  return out;
}

TrainResult train(const PolicyParams& theta0, const TrainConfig& train_cfg,
                  const RewardConfig& reward_cfg, const EpisodeSettings& settings,
                  const TrainHooks& hooks) {
  train_cfg.validate();
  reward_cfg.validate();
  TrainResult result{theta0, {}};
  PolicyParams& theta = result.theta;
  const Vocabulary& vocab = theta.arch().vocab;
  const int n = train_cfg.max_traj;

  for (int epoch = 0; epoch < train_cfg.max_epoch; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrajectoryRecord> records(static_cast<std::size_t>(n));
    std::vector<std::vector<StepTargets>> targets(static_cast<std::size_t>(n));
    const PolicyPerception policy(theta, PolicyPerception::Mode::kSample,
                                  settings.params.ego_length);
    parallel_for(n, train_cfg.workers, [&](int i) {
      EpisodeSettings s = settings;
      s.scenario.seed = train_cfg.rollout_seed(epoch, i);
      s.scenario.horizon = train_cfg.horizon;
      s.policy_salt = static_cast<std::uint64_t>(epoch);
      const auto idx = static_cast<std::size_t>(i);
      records[idx] = run_episode(s, policy);
      targets[idx] = assign_rewards(records[idx], reward_cfg, settings.params, settings.noise, vocab);
    });
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (hooks.rewrite_targets) hooks.rewrite_targets(targets[idx]);
      if (hooks.on_targets) hooks.on_targets(records[idx], targets[idx]);
    }
    std::vector<TrajectoryLoss> losses(static_cast<std::size_t>(n));
    parallel_for(n, train_cfg.workers, [&](int i) {
      const auto idx = static_cast<std::size_t>(i);
      losses[idx] = trajectory_loss(theta, records[idx], targets[idx], reward_cfg);
    });

    EpochLog row;
    row.epoch = epoch;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.flat().size());
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      g += losses[idx].grad;
      row.loss_total += losses[idx].total / n;
      row.loss_pc += losses[idx].perception / n;
      row.loss_rb += losses[idx].rulebook / n;
      row.violations += records[idx].totals();
      for (const auto& st : targets[idx])
        for (const auto& tt : st) row.substitutions += tt.substituted ? 1 : 0;
    }
    row.grad_norm = g.norm();
    if (!std::isfinite(row.loss_total))
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    ascent_step(theta, std::move(g), train_cfg.learning_rate, train_cfg.grad_clip);
    if (hooks.record_wall_time) {
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row, theta);
  }
  return result;
}

void PretrainConfig::validate() const {
  if (episodes < 1 || steps < 0 || batch_slots < 1)
    throw InvariantError("pretrain sizes must be positive");
  if (!(learning_rate > 0.0)) throw InvariantError("pretrain learning_rate must be > 0");
}

PolicyParams pretrain(const PolicyParams& theta0, const PretrainConfig& cfg,
                      const EpisodeSettings& settings) {
  cfg.validate();
  const Vocabulary& vocab = theta0.arch().vocab;
  const GroundTruthPerception driver(settings.params, settings.noise, vocab);

  std::vector<Eigen::VectorXd> features;
  std::vector<SlotTokens> labels;
  for (int e = 0; e < cfg.episodes; ++e) {
    EpisodeSettings s = settings;
    s.scenario.seed = cfg.seed + static_cast<std::uint64_t>(e);
    const TrajectoryRecord rec = run_episode(s, driver);
    for (const auto& step : rec.steps) {
      const auto truth = ground_truth_tokens(step, settings.params, vocab);
      const Eigen::MatrixXd f = featurize(step.frame, vocab);
      for (std::size_t k = 0; k < truth.size(); ++k) {
        features.push_back(f.col(static_cast<Eigen::Index>(k)));
        labels.push_back(truth[k]);
      }
    }
  }

  PolicyParams theta = theta0;
  Rng rng = make_rng(cfg.seed, 17);
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  const int batch = std::min<int>(cfg.batch_slots, static_cast<int>(labels.size()));
  Eigen::MatrixXd bf(features.front().size(), batch);
  std::vector<SlotTokens> bt(static_cast<std::size_t>(batch));
  std::vector<TokenRewards> br(static_cast<std::size_t>(batch));
  for (int it = 0; it < cfg.steps; ++it) {
    for (int b = 0; b < batch; ++b) {
      const std::size_t i = pick(rng);
      bf.col(b) = features[i];
      bt[static_cast<std::size_t>(b)] = labels[i];
      br[static_cast<std::size_t>(b)].fill(1.0);
    }
    LogProbGrad lg = logprob_and_grad(theta, bf, bt, br);
    theta.flat() += (cfg.learning_rate / batch) * lg.grad;
  }
  if (!theta.flat().allFinite()) throw NumericError("pretraining diverged");
  return theta;
}

MicroInstance MicroInstance::make(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MicroInstance m;
  SensorReading r;
  r.gap = 5.0 + 95.0 * u(rng);
  r.speed = 15.0 * u(rng);
  r.lane_offset = 0.0;
  r.class_evidence = u(rng);
  r.intensity = u(rng);
  m.frame.slots = {r};
  m.frame.sources = {kClutterSource};
  m.frame.fog = 0.0;
  m.reward_present = u(rng);
  m.reward_absent = u(rng);
  return m;
}

SlotTokens MicroInstance::tokens(int presence_token) const {
  if (presence_token == kAbsent) return absent_tokens();
  const Vocabulary vocab;
  SlotTokens t;
  t.tokens = {kPresent, kVehicleToken, vocab.distance_bucket(frame.slots[0]->gap),
              vocab.speed_bucket(frame.slots[0]->speed)};
  t.count = kNumHeads;
  return t;
}

TokenRewards MicroInstance::rewards(int presence_token) const {
  return {reward(presence_token), 0.0, 0.0, 0.0};
}

namespace {
Eigen::VectorXd presence_distribution(const PolicyParams& theta, const MicroInstance& m) {
  const Eigen::VectorXd x = featurize_slot(m.frame.slots[0], m.frame.fog, theta.arch().vocab);
  return head_distribution(theta, x, {}, Head::kPresence);
}

Eigen::VectorXd outcome_grad(const PolicyParams& theta, const MicroInstance& m, int token) {
  const SlotTokens t = m.tokens(token);
  const TokenRewards r = m.rewards(token);
  return logprob_and_grad(theta, m.frame, std::span<const SlotTokens>(&t, 1),
                          std::span<const TokenRewards>(&r, 1))
      .grad;
}
}  // namespace

double micro_expected_return(const PolicyParams& theta, const MicroInstance& m) {
  const Eigen::VectorXd p = presence_distribution(theta, m);
  return p(kPresent) * m.reward_present + p(kAbsent) * m.reward_absent;
}

Eigen::VectorXd micro_exact_gradient(const PolicyParams& theta, const MicroInstance& m) {
  const Eigen::VectorXd p = presence_distribution(theta, m);
  return p(kPresent) * outcome_grad(theta, m, kPresent) +
         p(kAbsent) * outcome_grad(theta, m, kAbsent);
}

McEstimate micro_mc_gradient(const PolicyParams& theta, const MicroInstance& m, int samples,
                             Rng& rng) {
  const Eigen::VectorXd p = presence_distribution(theta, m);
  const Eigen::VectorXd g_present = outcome_grad(theta, m, kPresent);
  const Eigen::VectorXd g_absent = outcome_grad(theta, m, kAbsent);
  std::bernoulli_distribution draw(p(kPresent));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g_present.size());
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(g_present.size());
  for (int i = 0; i < samples; ++i) {
    const Eigen::VectorXd& g = draw(rng) ? g_present : g_absent;
    sum += g;
    sum_sq += g.cwiseProduct(g);
  }
  McEstimate est;
  const double n = samples;
  est.mean = sum / n;
  const Eigen::VectorXd var =
      ((sum_sq / n - est.mean.cwiseProduct(est.mean)) * (n / (n - 1.0))).cwiseMax(0.0);
  est.std_error = (var / n).cwiseSqrt();
  return est;
}

std::vector<double> train_micro(PolicyParams& theta, const MicroInstance& m, int epochs,
                                int samples_per_epoch, double lr, double clip, Rng& rng) {
  std::vector<double> returns{micro_expected_return(theta, m)};
  for (int e = 0; e < epochs; ++e) {
    const Eigen::VectorXd p = presence_distribution(theta, m);
    std::bernoulli_distribution draw(p(kPresent));
    const Eigen::VectorXd g_present = outcome_grad(theta, m, kPresent);
    const Eigen::VectorXd g_absent = outcome_grad(theta, m, kAbsent);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.flat().size());
    for (int i = 0; i < samples_per_epoch; ++i) g += draw(rng) ? g_present : g_absent;
    g /= samples_per_epoch;
    ascent_step(theta, std::move(g), lr, clip);
    returns.push_back(micro_expected_return(theta, m));
  }
  return returns;
}

}  // namespace safeperc

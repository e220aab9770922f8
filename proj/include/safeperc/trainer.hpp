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
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "safeperc/episode.hpp"
#include "safeperc/perception.hpp"
#include "safeperc/rulebook.hpp"

namespace safeperc {

struct RewardConfig {
  double beta = 0.5;  // r = beta * r_pc + (1 - beta) * r_rb
  double w_percp = 1.0;
  double match_threshold = 0.5;
  double gamma = 1.0;

  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

struct TrainConfig {
  int max_epoch = 20;
  int max_traj = 5;
  int horizon = 100;
  double learning_rate = 0.5;
  double grad_clip = 1.0;
  std::uint64_t seed = 7;
  int workers = 1;
  // When > 0, rollouts cycle through this many fixed scenario seeds and only
  // the sampling noise changes between epochs. 0 draws fresh scenarios.
  int scenario_pool = 5;

  void validate() const;
  // Episode seed of rollout `traj` in `epoch`.
  std::uint64_t rollout_seed(int epoch, int traj) const;
  bool operator==(const TrainConfig&) const = default;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 1-D IoU of the longitudinal extents [pos - depth/2, pos + depth/2].
double interval_iou(const SceneObject& a, const SceneObject& b);

struct Match {
  std::size_t truth = 0;
  double iou = 0.0;
};

// Best same-lane, same-class truth with IoU >= threshold.
std::optional<Match> match_detection(const SceneObject& det,
                                     std::span<const SceneObject> truths,
                                     double threshold);

// Greedy one-to-one assignment by descending IoU over same-lane,
// same-class pairs with IoU >= threshold. Result is parallel to `dets`.
std::vector<std::optional<Match>> match_detections(std::span<const SceneObject> dets,
                                                   std::span<const SceneObject> truths,
                                                   double threshold);

struct TrainingTarget {
  SlotTokens tokens;  // sampled, or the ground-truth encoding when substituted
  TokenRewards reward{};
  bool substituted = false;
  bool correct = false;
  double r_pc = 0.0;
  double r_rb = 0.0;
};

using StepTargets = std::vector<TrainingTarget>;

// Ground-truth tokens for every slot of step t (Absent for clutter/empty).
std::vector<SlotTokens> ground_truth_tokens(const StepRecord& step,
                                            const VehicleParams& params,
                                            const Vocabulary& vocab);

// Correct = Present and matched with the right class, or Absent over a slot
// with no real object behind it.
std::vector<bool> detection_correctness(const StepRecord& step,
                                        const VehicleParams& params,
                                        const NoiseModel& noise,
                                        const Vocabulary& vocab,
                                        double match_threshold);

// Violation share a wrong detection in `slot` at step t is charged with:
// the (discounted) suffix score when replacing that slot with its
// ground-truth tokens changes the command at t, zero otherwise.
ViolationVector attribute_violation(const TrajectoryRecord& record, std::size_t t,
                                    std::size_t slot, const VehicleParams& params,
                                    const NoiseModel& noise, const Vocabulary& vocab,
                                    const RewardConfig& reward);

std::vector<StepTargets> assign_rewards(const TrajectoryRecord& record,
                                        const RewardConfig& reward,
                                        const VehicleParams& params,
                                        const NoiseModel& noise,
                                        const Vocabulary& vocab);

// Scales g in place so ||g|| <= clip; returns the pre-clip norm.
double clip_global_norm(Eigen::VectorXd& g, double clip);

// theta += lr * g after clipping g. Throws NumericError on non-finite input.
void ascent_step(PolicyParams& theta, Eigen::VectorXd g, double lr, double clip);

struct TrajectoryLoss {
  double total = 0.0;  // -(1/N) sum R log pi
  double perception = 0.0;
  double rulebook = 0.0;
  std::size_t tokens = 0;
  Eigen::VectorXd grad;  // (1/N) grad sum R log pi
};

TrajectoryLoss trajectory_loss(const PolicyParams& theta, const TrajectoryRecord& record,
                               std::span<const StepTargets> targets,
                               const RewardConfig& reward);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_pc = 0.0;
  double loss_rb = 0.0;
  ViolationVector violations = ViolationVector::Zero();
  double wall_time_s = 0.0;
  double grad_norm = 0.0;
  std::size_t substitutions = 0;
};

struct TrainResult {
  PolicyParams theta;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  // Called after each epoch's update with the new parameters.
  std::function<void(const EpochLog&, const PolicyParams&)> on_epoch;
  // Called on every rollout's targets (tests use it to audit substitutions).
  std::function<void(const TrajectoryRecord&, std::span<const StepTargets>)> on_targets;
  // Overrides rewards after assignment (tests use it to force zero rewards).
  std::function<void(std::vector<StepTargets>&)> rewrite_targets;
  bool record_wall_time = false;
};

TrainResult train(const PolicyParams& theta0, const TrainConfig& train_cfg,
                  const RewardConfig& reward_cfg, const EpisodeSettings& settings,
                  const TrainHooks& hooks = {});

// Supervised warm start: maximizes the log-likelihood of ground-truth tokens
// on frames collected with ground-truth driving.
struct PretrainConfig {
  int episodes = 12;
  int steps = 1000;
  int batch_slots = 256;
  double learning_rate = 2.0;
  std::uint64_t seed = 99;

  void validate() const;
  bool operator==(const PretrainConfig&) const = default;
};

PolicyParams pretrain(const PolicyParams& theta0, const PretrainConfig& cfg,
                      const EpisodeSettings& settings);

// A one-slot frame where only the presence token is decided and rewarded;
// small enough to enumerate exactly.
struct MicroInstance {
  SensorFrame frame;
  double reward_present = 0.0;
  double reward_absent = 0.0;

  static MicroInstance make(Rng& rng);
  double reward(int presence_token) const {
    return presence_token == kPresent ? reward_present : reward_absent;
  }
  SlotTokens tokens(int presence_token) const;
  TokenRewards rewards(int presence_token) const;
  int best_token() const { return reward_present >= reward_absent ? kPresent : kAbsent; }
};

// Exact J = sum_a pi(a) R(a) and its gradient by enumeration.
double micro_expected_return(const PolicyParams& theta, const MicroInstance& m);
Eigen::VectorXd micro_exact_gradient(const PolicyParams& theta, const MicroInstance& m);

struct McEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd std_error;
};

// Monte-Carlo log-derivative estimate from `samples` draws.
McEstimate micro_mc_gradient(const PolicyParams& theta, const MicroInstance& m,
                             int samples, Rng& rng);

// REINFORCE on the micro-instance using the same clipped ascent step as
// train(). Returns J after every epoch (index 0 = before training).
std::vector<double> train_micro(PolicyParams& theta, const MicroInstance& m, int epochs,
                                int samples_per_epoch, double lr, double clip, Rng& rng);

}  // namespace safeperc

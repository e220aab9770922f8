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
#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safeperc/domain.hpp"
#include "safeperc/simulator.hpp"

namespace safeperc {

// Autoregressive order inside one slot: presence -> class -> distance -> speed.
enum class Head : int { kPresence = 0, kClass = 1, kDistance = 2, kSpeed = 3 };
inline constexpr int kNumHeads = 4;

inline constexpr int kPresent = 0;
inline constexpr int kAbsent = 1;
inline constexpr int kVehicleToken = 0;
inline constexpr int kPedestrianToken = 1;

// Token vocabulary and decode defaults. Bucket tokens decode to midpoints.
struct Vocabulary {
  int n_distance = 64;
  double distance_lo = 0.0;
  double distance_hi = 128.0;
  int n_speed = 16;
  double speed_lo = -10.0;
  double speed_hi = 30.0;

  int size(Head h) const;
  double distance_width() const { return (distance_hi - distance_lo) / n_distance; }
  double speed_width() const { return (speed_hi - speed_lo) / n_speed; }
  int distance_bucket(double gap_m) const;
  int speed_bucket(double v) const;
  double distance_mid(int bucket) const;
  double speed_mid(int bucket) const;

  void validate() const;
  bool operator==(const Vocabulary&) const = default;
};

struct Architecture {
  Vocabulary vocab;
  bool hidden_layer = false;
  int hidden_width = 32;

  int feature_dim() const;
  // Width of the body output fed to every head.
  int body_dim() const { return hidden_layer ? hidden_width : feature_dim(); }
  // One-hot width of the tokens emitted before head h in the same slot.
  int conditioning_dim(Head h) const;
  std::size_t param_count() const;
  bool operator==(const Architecture&) const = default;
};

// Per-slot features: presence flag, normalized gap and speed, lane offset,
// same-lane indicator, class evidence, return intensity, fog, then tent
// encodings of gap over distance-bucket midpoints and of speed over
// speed-bucket midpoints. An empty slot is all zeros.
Eigen::MatrixXd featurize(const SensorFrame& frame, const Vocabulary& vocab);
Eigen::VectorXd featurize_slot(const std::optional<SensorReading>& reading,
                               double fog, const Vocabulary& vocab);

// theta: all weights in one flat vector; matrix views are column-major maps.
class PolicyParams {
 public:
  explicit PolicyParams(const Architecture& arch);

  // Small random init (uniform in [-scale, scale]).
  static PolicyParams random(const Architecture& arch, double scale, Rng& rng);

  const Architecture& arch() const { return arch_; }
  Eigen::VectorXd& flat() { return theta_; }
  const Eigen::VectorXd& flat() const { return theta_; }

  Eigen::Map<const Eigen::MatrixXd> hidden_weight() const;
  Eigen::Map<const Eigen::VectorXd> hidden_bias() const;
  Eigen::Map<const Eigen::MatrixXd> head_weight(Head h) const;
  Eigen::Map<const Eigen::VectorXd> head_bias(Head h) const;
  Eigen::Map<Eigen::MatrixXd> head_weight(Head h);
  Eigen::Map<Eigen::VectorXd> head_bias(Head h);

  struct Block {
    std::size_t weight = 0;
    std::size_t bias = 0;
    int rows = 0;
    int cols = 0;
  };
  const Block& hidden_block() const { return hidden_; }
  const Block& head_block(Head h) const { return heads_[static_cast<int>(h)]; }

  bool operator==(const PolicyParams& o) const {
    return arch_ == o.arch_ && theta_.size() == o.theta_.size() && theta_ == o.theta_;
  }

 private:
  Architecture arch_;
  Eigen::VectorXd theta_;
  Block hidden_;
  std::array<Block, kNumHeads> heads_;
};

// Tokens emitted for one slot; an Absent slot carries only the presence
// token.
struct SlotTokens {
  std::array<int, kNumHeads> tokens{};
  int count = 0;

  bool present() const { return count > 0 && tokens[0] == kPresent; }
  bool operator==(const SlotTokens&) const = default;
};

SlotTokens absent_tokens();
SlotTokens encode_object(const SceneObject& obj, double gap_m, const Vocabulary& vocab);

struct SlotDetection {
  SlotTokens tokens;
  std::array<double, kNumHeads> prob{};
  std::array<double, kNumHeads> logprob{};
  std::optional<SceneObject> object;  // decoded when Present
};

struct DetectionSequence {
  std::vector<SlotDetection> slots;

  double logprob() const;
  std::vector<SceneObject> objects() const;
  // Per-slot joint probability of the emitted tokens.
  std::vector<double> probs() const;
  std::vector<SlotTokens> tokens() const;
};

// Turns a token tuple into an object relative to the ego pose. Lane comes
// from the slot's reading (ego lane when the slot is empty).
SceneObject decode_object(const SlotTokens& tokens,
                          const std::optional<SensorReading>& reading,
                          const EgoState& ego, const Vocabulary& vocab,
                          double ego_length, int slot_index);

// Decode defaults.
inline constexpr double kAssumedMaxBrake = 8.0;

// softmax(W [body; onehot(emitted)] + b) for one head.
Eigen::VectorXd head_distribution(const PolicyParams& theta,
                                  const Eigen::VectorXd& features,
                                  std::span<const int> emitted, Head head);

DetectionSequence sample(const PolicyParams& theta, const SensorFrame& frame,
                         const EgoState& ego, double ego_length, Rng& rng);

// Greedy decoding; ties resolve to the lowest token index.
DetectionSequence argmax_detect(const PolicyParams& theta, const SensorFrame& frame,
                                const EgoState& ego, double ego_length);

using TokenRewards = std::array<double, kNumHeads>;

struct LogProbGrad {
  double value = 0.0;  // sum_j R_j log pi(A_j)
  Eigen::VectorXd grad;
};

// Reward-weighted log-likelihood of `tokens` under theta and its exact
// gradient. Throws std::invalid_argument when tokens or rewards are not
// aligned with the frame's slots.
LogProbGrad logprob_and_grad(const PolicyParams& theta, const SensorFrame& frame,
                             std::span<const SlotTokens> tokens,
                             std::span<const TokenRewards> rewards);

// Same computation from precomputed slot features (columns).
LogProbGrad logprob_and_grad(const PolicyParams& theta,
                             const Eigen::MatrixXd& features,
                             std::span<const SlotTokens> tokens,
                             std::span<const TokenRewards> rewards);

// Per-token log pi(A) for the tokens of each slot (entries past the slot's
// token count are zero).
std::vector<std::array<double, kNumHeads>> token_logprobs(
    const PolicyParams& theta, const Eigen::MatrixXd& features,
    std::span<const SlotTokens> tokens);

// Checkpoint I/O. Layout (little endian):
//   char[8] "SAFEPERC", u32 version,
//   i32 n_distance, f64 distance_lo, f64 distance_hi,
//   i32 n_speed, f64 speed_lo, f64 speed_hi,
//   u8 hidden_layer, i32 hidden_width, i32 feature_dim,
//   u64 n_params, f64[n_params].
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const PolicyParams& theta);
// Throws std::runtime_error on a bad header, truncation or when the stored
// vocabulary differs from `expected`.
PolicyParams read_checkpoint(std::istream& in, const Vocabulary& expected);

void save_checkpoint(const std::string& path, const PolicyParams& theta);
PolicyParams load_checkpoint(const std::string& path, const Vocabulary& expected);

}  // namespace safeperc

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
#include <sstream>

#include "oracles/gradcheck.hpp"
#include "safeperc/perception.hpp"
#include "support.hpp"

using namespace safeperc;
using namespace testing_support;

namespace {

SensorFrame frame_of(std::vector<std::optional<SensorReading>> slots, double fog = 0.0) {
  SensorFrame f;
  f.fog = fog;
  f.slots = std::move(slots);
  f.sources.assign(f.slots.size(), kEmptySource);
  return f;
}

SensorReading reading(double gap_m, double speed, double lane_offset = 0.0,
                      double evidence = 1.0, double intensity = 1.0) {
  return SensorReading{gap_m, speed, lane_offset, evidence, intensity};
}

// Affine policy whose biases put `boost` logits on one token per head.
PolicyParams peaked(const Architecture& arch, std::array<int, kNumHeads> choice, double boost) {
  PolicyParams theta(arch);
  for (int k = 0; k < kNumHeads; ++k) {
    theta.head_bias(static_cast<Head>(k))(choice[static_cast<std::size_t>(k)]) = boost;
  }
  return theta;
}

}  // namespace

TEST_CASE("vocabulary sizes and bucket round trip") {
  const Vocabulary v;
  CHECK(v.size(Head::kPresence) == 2);
  CHECK(v.size(Head::kClass) == 2);
  CHECK(v.size(Head::kDistance) == 64);
  CHECK(v.size(Head::kSpeed) == 16);
  for (int k = 0; k < v.n_distance; ++k) CHECK(v.distance_bucket(v.distance_mid(k)) == k);
  for (int k = 0; k < v.n_speed; ++k) CHECK(v.speed_bucket(v.speed_mid(k)) == k);
  CHECK(v.distance_bucket(-5.0) == 0);
  CHECK(v.distance_bucket(500.0) == 63);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> gd(0.0, 128.0), sd(-10.0, 30.0);
  for (int i = 0; i < 10000; ++i) {
    const double g = gd(rng), s = sd(rng);
    REQUIRE(std::abs(v.distance_mid(v.distance_bucket(g)) - g) <= 1.0 + 1e-12);
    REQUIRE(std::abs(v.speed_mid(v.speed_bucket(s)) - s) <= 1.25 + 1e-12);
  }

  Vocabulary bad;
  bad.n_speed = 1;
  CHECK_THROWS_AS(bad.validate(), InvariantError);
  bad = Vocabulary{};
  bad.distance_hi = bad.distance_lo;
  CHECK_THROWS_AS(bad.validate(), InvariantError);
}

TEST_CASE("encoding then decoding lands on bucket midpoints") {
  const Vocabulary v;
  const EgoState e = ego(10, 5, 0, 1);
  const SceneObject truth = vehicle(4, 1, 47.3, 12.4, 8, 4.5);
  const double g = gap(e, truth, 4.0);
  const SlotTokens t = encode_object(truth, g, v);
  CHECK(t.present());
  CHECK(t.count == kNumHeads);
  const SceneObject back = decode_object(t, reading(g, 12.4), e, v, 4.0, 2);
  CHECK(back.kind == ObjectKind::kVehicle);
  CHECK(back.lane == 1);
  CHECK(gap(e, back, 4.0) == doctest::Approx(v.distance_mid(t.tokens[2])));
  CHECK(std::abs(gap(e, back, 4.0) - g) <= 1.0);
  CHECK(std::abs(back.speed - truth.speed) <= 1.25);
  CHECK(back.max_brake == kAssumedMaxBrake);

  const SceneObject ped = pedestrian(5, 1, 30);
  const SceneObject pb = decode_object(encode_object(ped, gap(e, ped, 4.0), v),
                                       reading(1, 0, -1.2, 0), e, v, 4.0, 0);
  CHECK(pb.kind == ObjectKind::kPedestrian);
  CHECK(pb.depth == 0.5);
  CHECK(pb.lane == 0);
  CHECK_THROWS_AS(decode_object(absent_tokens(), std::nullopt, e, v, 4.0, 0),
                  std::invalid_argument);
}

TEST_CASE("slot features") {
  const Vocabulary v;
  const SensorFrame f = frame_of({std::nullopt, reading(64, 10, 0.1, 0.9, 0.7)}, 40);
  const Eigen::MatrixXd x = featurize(f, v);
  CHECK(x.rows() == Architecture{}.feature_dim());
  CHECK(x.cols() == 2);
  CHECK(x.col(0).isZero());
  CHECK(x(0, 1) == 1.0);
  CHECK(x(1, 1) == 0.5);
  CHECK(x(2, 1) == 10.0 / 30.0);
  CHECK(x(3, 1) == 0.1);
  CHECK(x(4, 1) == 1.0);
  CHECK(x(5, 1) == 0.9);
  CHECK(x(6, 1) == 0.7);
  CHECK(x(7, 1) == 0.4);
  // Both tent encodings are convex weights.
  CHECK(x.col(1).segment(8, 64).sum() == doctest::Approx(1.0));
  CHECK(x.col(1).segment(72, 16).sum() == doctest::Approx(1.0));
  CHECK(x.col(1).segment(8, 64).minCoeff() >= 0.0);
}

TEST_CASE("parameter counts stay small") {
  Architecture affine;
  Architecture hidden;
  hidden.hidden_layer = true;
  CHECK(affine.param_count() == 8824);
  CHECK(hidden.param_count() == 6968);
  CHECK(PolicyParams(affine).flat().size() == 8824);
  CHECK(PolicyParams(hidden).flat().size() == 6968);
  CHECK(affine.param_count() <= 10000);
}

TEST_CASE("head distributions") {
  Architecture arch;
  const PolicyParams zero(arch);
  const Eigen::VectorXd x = featurize_slot(reading(30, 5), 0.0, arch.vocab);
  const std::array<int, kNumHeads> emitted{kPresent, kVehicleToken, 10, 3};

  const Eigen::VectorXd pd = head_distribution(zero, x, emitted, Head::kDistance);
  CHECK(pd.size() == 64);
  CHECK((pd.array() - 1.0 / 64).abs().maxCoeff() <= 1e-15);

  std::mt19937_64 rng(2);
  PolicyParams theta = PolicyParams::random(arch, 0.5, rng);
  const Eigen::VectorXd before = head_distribution(theta, x, emitted, Head::kSpeed);
  theta.head_bias(Head::kSpeed).array() += 7.5;
  const Eigen::VectorXd after = head_distribution(theta, x, emitted, Head::kSpeed);
  CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-12);

  PolicyParams boosted(arch);
  boosted.head_bias(Head::kClass)(1) = 20.0;
  CHECK(head_distribution(boosted, x, emitted, Head::kClass)(1) > 0.999);
}

TEST_CASE("head distributions are normalized") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (bool hidden : {false, true}) {
    Architecture arch;
    arch.hidden_layer = hidden;
    for (int i = 0; i < 5000; ++i) {
      const PolicyParams theta = PolicyParams::random(arch, 2.0, rng);
      const Eigen::VectorXd x = featurize_slot(
          reading(128 * u(rng), -10 + 40 * u(rng), u(rng) * 2 - 1, u(rng), u(rng)),
          100 * u(rng), arch.vocab);
      const std::array<int, kNumHeads> emitted{kPresent, static_cast<int>(2 * u(rng)),
                                               static_cast<int>(64 * u(rng)), 0};
      const Head h = static_cast<Head>(i % kNumHeads);
      const Eigen::VectorXd p = head_distribution(theta, x, emitted, h);
      REQUIRE(std::abs(p.sum() - 1.0) <= 1e-9);
      REQUIRE(p.minCoeff() > 0.0);
    }
  }
}

TEST_CASE("sampling") {
  Architecture arch;
  std::mt19937_64 init(4);
  const PolicyParams theta = PolicyParams::random(arch, 1.0, init);
  const SensorFrame f = frame_of({reading(20, 5), std::nullopt, reading(80, 12, 1.0, 0.2)});
  const EgoState e = ego(0, 8);

  Rng a = make_rng(5, 3), b = make_rng(5, 3);
  const DetectionSequence s1 = sample(theta, f, e, 4.0, a);
  const DetectionSequence s2 = sample(theta, f, e, 4.0, b);
  CHECK(s1.tokens() == s2.tokens());

  // Absent stops the slot; present slots carry all four tokens and a decoded object.
  Rng r = make_rng(6, 3);
  bool saw_absent = false, saw_present = false;
  for (int i = 0; i < 200; ++i) {
    const DetectionSequence s = sample(theta, f, e, 4.0, r);
    for (const auto& slot : s.slots) {
      if (slot.tokens.present()) {
        saw_present = true;
        CHECK(slot.tokens.count == kNumHeads);
        CHECK(slot.object.has_value());
      } else {
        saw_absent = true;
        CHECK(slot.tokens.count == 1);
        CHECK_FALSE(slot.object.has_value());
      }
      for (int k = 0; k < slot.tokens.count; ++k) {
        CHECK(slot.prob[static_cast<std::size_t>(k)] > 0.0);
        CHECK(slot.prob[static_cast<std::size_t>(k)] <= 1.0);
      }
    }
  }
  CHECK(saw_absent);
  CHECK(saw_present);
}

TEST_CASE("a peaked policy samples its mode") {
  Architecture arch;
  const std::array<int, kNumHeads> mode{kPresent, kPedestrianToken, 9, 4};
  const PolicyParams theta = peaked(arch, mode, 30.0);
  const SensorFrame f = frame_of({reading(20, 5), reading(40, 0)});
  const EgoState e = ego(0, 8);
  Rng rng = make_rng(7, 3);
  const DetectionSequence greedy = argmax_detect(theta, f, e, 4.0);
  for (int i = 0; i < 50; ++i) {
    const DetectionSequence s = sample(theta, f, e, 4.0, rng);
    CHECK(s.tokens() == greedy.tokens());
    for (double p : s.probs()) CHECK(p >= std::pow(0.999, 4));
  }
  CHECK(greedy.slots[0].tokens.tokens == mode);
}

TEST_CASE("argmax breaks ties toward the lowest token") {
  Architecture arch;
  const PolicyParams zero(arch);
  const SensorFrame f = frame_of({reading(20, 5)});
  const DetectionSequence d = argmax_detect(zero, f, ego(0, 8), 4.0);
  CHECK(d.slots[0].tokens.tokens == std::array<int, kNumHeads>{0, 0, 0, 0});
  const DetectionSequence again = argmax_detect(zero, f, ego(0, 8), 4.0);
  CHECK(again.tokens() == d.tokens());
}

TEST_CASE("stored log-probabilities are consistent") {
  Architecture arch;
  arch.hidden_layer = true;
  std::mt19937_64 init(8);
  const PolicyParams theta = PolicyParams::random(arch, 1.0, init);
  const SensorFrame f = frame_of({reading(20, 5), std::nullopt, reading(70, -3, -1, 0.1)});
  Rng rng = make_rng(9, 3);
  const DetectionSequence s = sample(theta, f, ego(0, 8), 4.0, rng);
  double sum = 0.0;
  for (const auto& slot : s.slots) {
    for (int k = 0; k < slot.tokens.count; ++k) {
      sum += slot.logprob[static_cast<std::size_t>(k)];
      CHECK(slot.logprob[static_cast<std::size_t>(k)] ==
            doctest::Approx(std::log(slot.prob[static_cast<std::size_t>(k)])));
    }
  }
  CHECK(s.logprob() == sum);

  const auto tokens = s.tokens();
  const auto recomputed = token_logprobs(theta, featurize(f, arch.vocab), tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (int k = 0; k < tokens[i].count; ++k) {
      CHECK(recomputed[i][static_cast<std::size_t>(k)] ==
            doctest::Approx(s.slots[i].logprob[static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero rewards give a zero gradient") {
  Architecture arch;
  Rng rng = make_rng(10, 0);
  oracle::GradInstance g = oracle::random_grad_instance(arch, rng);
  for (auto& r : g.rewards) r.fill(0.0);
  const LogProbGrad out = logprob_and_grad(g.theta, g.features, g.tokens, g.rewards);
  CHECK(out.value == 0.0);
  CHECK(out.grad.isZero(0.0));
}

TEST_CASE("single token gradient is reward-scaled onehot minus softmax") {
  Architecture arch;
  std::mt19937_64 init(11);
  const PolicyParams theta = PolicyParams::random(arch, 0.5, init);
  const SensorFrame f = frame_of({reading(33, 7)});
  const Eigen::MatrixXd x = featurize(f, arch.vocab);
  const std::vector<SlotTokens> tokens{absent_tokens()};
  const std::vector<TokenRewards> rewards{TokenRewards{2.5, 0, 0, 0}};
  const LogProbGrad out = logprob_and_grad(theta, x, tokens, rewards);

  const Eigen::VectorXd p =
      head_distribution(theta, x.col(0), std::span<const int>(), Head::kPresence);
  Eigen::VectorXd expected = -2.5 * p;
  expected(kAbsent) += 2.5;
  const auto& blk = theta.head_block(Head::kPresence);
  const Eigen::VectorXd db = out.grad.segment(static_cast<Eigen::Index>(blk.bias), blk.rows);
  CHECK((db - expected).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(out.value == doctest::Approx(2.5 * std::log(p(kAbsent))));
  // Only the presence head moved.
  CHECK(out.grad.segment(static_cast<Eigen::Index>(theta.head_block(Head::kClass).weight),
                         out.grad.size() -
                             static_cast<Eigen::Index>(theta.head_block(Head::kClass).weight))
            .isZero(0.0));
}

TEST_CASE("analytic gradient matches finite differences") {
  for (bool hidden : {false, true}) {
    CAPTURE(hidden);
    Architecture arch;
    arch.hidden_layer = hidden;
    Rng rng = make_rng(hidden ? 13 : 12, 0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const oracle::GradInstance g = oracle::random_grad_instance(arch, rng);
      worst = std::max(worst, oracle::max_relative_error(g, rng, 120));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("misaligned tokens or rewards are rejected") {
  Architecture arch;
  const PolicyParams theta(arch);
  const SensorFrame f = frame_of({reading(33, 7), std::nullopt});
  const std::vector<SlotTokens> one{absent_tokens()};
  const std::vector<SlotTokens> two{absent_tokens(), absent_tokens()};
  const std::vector<TokenRewards> r1(1), r2(2);
  CHECK_THROWS_AS(logprob_and_grad(theta, f, one, r1), std::invalid_argument);
  CHECK_THROWS_AS(logprob_and_grad(theta, f, two, r1), std::invalid_argument);
  SlotTokens broken = absent_tokens();
  broken.count = 3;
  const std::vector<SlotTokens> bad{broken, absent_tokens()};
  const std::vector<TokenRewards> ones(2, TokenRewards{1, 1, 1, 1});
  CHECK_THROWS_AS(logprob_and_grad(theta, f, bad, ones), std::invalid_argument);
  CHECK_NOTHROW(logprob_and_grad(theta, f, two, r2));
}

TEST_CASE("checkpoints round trip and guard their vocabulary") {
  for (bool hidden : {false, true}) {
    Architecture arch;
    arch.hidden_layer = hidden;
    std::mt19937_64 init(14);
    const PolicyParams theta = PolicyParams::random(arch, 1.0, init);
    std::stringstream buf;
    write_checkpoint(buf, theta);
    const std::string bytes = buf.str();
    std::stringstream in(bytes);
    const PolicyParams back = read_checkpoint(in, arch.vocab);
    CHECK(back == theta);

    std::stringstream again;
    write_checkpoint(again, back);
    CHECK(again.str() == bytes);

    Vocabulary other = arch.vocab;
    other.n_distance = 32;
    std::stringstream mismatch(bytes);
    CHECK_THROWS_WITH_AS(read_checkpoint(mismatch, other), "checkpoint vocabulary mismatch",
                         std::runtime_error);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(read_checkpoint(truncated, arch.vocab), std::runtime_error);

    std::string garbled = bytes;
    garbled[0] = 'X';
    std::stringstream bad_magic(garbled);
    CHECK_THROWS_AS(read_checkpoint(bad_magic, arch.vocab), std::runtime_error);
  }
}

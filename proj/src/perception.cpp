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

#include "safeperc/perception.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace safeperc {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr int kScalarFeatures = 8;
constexpr char kMagic[8] = {'S', 'A', 'F', 'E', 'P', 'E', 'R', 'C'};

int head_index(Head h) { return static_cast<int>(h); }

// Hat functions centered on the bucket midpoints; the value is clamped to
// the midpoint span so the encoding always sums to one.
void tent_encode(double x, double lo, double width, int n,
                 Eigen::Ref<Eigen::VectorXd> out) {
  out.setZero();
  const double first = lo + 0.5 * width;
  const double pos = std::clamp((x - first) / width, 0.0, static_cast<double>(n - 1));
  const int i = std::min(static_cast<int>(std::floor(pos)), n - 1);
  const double frac = pos - i;
  out(i) += 1.0 - frac;
  if (i + 1 < n) out(i + 1) += frac;
}

// Conditioning one-hot for head h given earlier tokens in the slot.
Eigen::VectorXd conditioning(const Architecture& arch, Head h,
                             std::span<const int> emitted) {
  const auto& v = arch.vocab;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(arch.conditioning_dim(h));
  const int k = head_index(h);
  if (static_cast<int>(emitted.size()) < k)
    throw std::invalid_argument("head_distribution: missing earlier tokens");
  int offset = 0;
  for (int j = 0; j < k; ++j) {
    const int width = v.size(static_cast<Head>(j));
    const int tok = emitted[static_cast<std::size_t>(j)];
    if (tok < 0 || tok >= width) throw std::invalid_argument("token out of range");
    c(offset + tok) = 1.0;
    offset += width;
  }
  return c;
}

void softmax_inplace(Eigen::VectorXd& z, double* log_norm = nullptr) {
  const double m = z.maxCoeff();
  z.array() -= m;
  z = z.array().exp();
  const double s = z.sum();
  z /= s;
  if (log_norm) *log_norm = m + std::log(s);
}

Eigen::VectorXd body(const PolicyParams& theta, const Eigen::VectorXd& x) {
  if (!theta.arch().hidden_layer) return x;
  Eigen::VectorXd pre = theta.hidden_weight() * x + theta.hidden_bias();
  return pre.array().tanh().matrix();
}

Eigen::VectorXd head_input(const PolicyParams& theta, const Eigen::VectorXd& h,
                           Head head, std::span<const int> emitted) {
  const Eigen::VectorXd c = conditioning(theta.arch(), head, emitted);
  Eigen::VectorXd z(h.size() + c.size());
  z << h, c;
  return z;
}

Eigen::VectorXd logits(const PolicyParams& theta, const Eigen::VectorXd& z, Head head) {
  return theta.head_weight(head) * z + theta.head_bias(head);
}

template <typename Chooser>
DetectionSequence decode_frame(const PolicyParams& theta, const SensorFrame& frame,
                               const EgoState& ego, double ego_length,
                               Chooser&& choose) {
  const auto& vocab = theta.arch().vocab;
  const Eigen::MatrixXd feats = featurize(frame, vocab);
  DetectionSequence seq;
  seq.slots.resize(frame.slots.size());
  for (std::size_t s = 0; s < frame.slots.size(); ++s) {
    const Eigen::VectorXd h = body(theta, feats.col(static_cast<Eigen::Index>(s)));
    SlotDetection& det = seq.slots[s];
    std::array<int, kNumHeads> emitted{};
    for (int k = 0; k < kNumHeads; ++k) {
      const Head head = static_cast<Head>(k);
      Eigen::VectorXd p = logits(
          theta, head_input(theta, h, head, std::span<const int>(emitted.data(), k)), head);
      softmax_inplace(p);
      const int tok = choose(p);
      emitted[static_cast<std::size_t>(k)] = tok;
      det.tokens.tokens[static_cast<std::size_t>(k)] = tok;
      det.tokens.count = k + 1;
      det.prob[static_cast<std::size_t>(k)] = p(tok);
      det.logprob[static_cast<std::size_t>(k)] = std::log(p(tok));
      if (head == Head::kPresence && tok == kAbsent) break;
    }
    if (det.tokens.present()) {
      det.object = decode_object(det.tokens, frame.slots[s], ego, vocab, ego_length,
                                 static_cast<int>(s));
    }
  }
  return seq;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

int Vocabulary::size(Head h) const {
  switch (h) {
    case Head::kPresence: return 2;
    case Head::kClass: return 2;
    case Head::kDistance: return n_distance;
    case Head::kSpeed: return n_speed;
  }
  return 0;
}

int Vocabulary::distance_bucket(double gap_m) const {
  const int b = static_cast<int>(std::floor((gap_m - distance_lo) / distance_width()));
  return std::clamp(b, 0, n_distance - 1);
}

int Vocabulary::speed_bucket(double v) const {
  const int b = static_cast<int>(std::floor((v - speed_lo) / speed_width()));
  return std::clamp(b, 0, n_speed - 1);
}

double Vocabulary::distance_mid(int bucket) const {
  return distance_lo + (bucket + 0.5) * distance_width();
}

double Vocabulary::speed_mid(int bucket) const {
  return speed_lo + (bucket + 0.5) * speed_width();
}

void Vocabulary::validate() const {
  if (n_distance < 2 || n_speed < 2) throw InvariantError("vocabulary needs >= 2 buckets per head");
  if (!(distance_hi > distance_lo) || !(speed_hi > speed_lo))
    throw InvariantError("bucket edges must be strictly increasing");
}

int Architecture::feature_dim() const {
  return kScalarFeatures + vocab.n_distance + vocab.n_speed;
}

int Architecture::conditioning_dim(Head h) const {
  int dim = 0;
  for (int j = 0; j < static_cast<int>(h); ++j) dim += vocab.size(static_cast<Head>(j));
  return dim;
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  if (hidden_layer) n += static_cast<std::size_t>(hidden_width) * (feature_dim() + 1);
  for (int k = 0; k < kNumHeads; ++k) {
    const Head h = static_cast<Head>(k);
    n += static_cast<std::size_t>(vocab.size(h)) * (body_dim() + conditioning_dim(h) + 1);
  }
  return n;
}

Eigen::VectorXd featurize_slot(const std::optional<SensorReading>& reading,
                               double fog, const Vocabulary& vocab) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kScalarFeatures + vocab.n_distance + vocab.n_speed);
  if (!reading) return x;
  const SensorReading& r = *reading;
  x(0) = 1.0;
  x(1) = r.gap / vocab.distance_hi;
  x(2) = r.speed / vocab.speed_hi;
  x(3) = r.lane_offset;
  x(4) = std::abs(r.lane_offset) < 0.5 ? 1.0 : 0.0;
  x(5) = r.class_evidence;
  x(6) = r.intensity;
  x(7) = fog / 100.0;
  tent_encode(r.gap, vocab.distance_lo, vocab.distance_width(), vocab.n_distance,
              x.segment(kScalarFeatures, vocab.n_distance));
  tent_encode(r.speed, vocab.speed_lo, vocab.speed_width(), vocab.n_speed,
              x.segment(kScalarFeatures + vocab.n_distance, vocab.n_speed));
  return x;
}

Eigen::MatrixXd featurize(const SensorFrame& frame, const Vocabulary& vocab) {
  const int dim = kScalarFeatures + vocab.n_distance + vocab.n_speed;
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(frame.slots.size()));
  for (std::size_t s = 0; s < frame.slots.size(); ++s)
    out.col(static_cast<Eigen::Index>(s)) = featurize_slot(frame.slots[s], frame.fog, vocab);
  return out;
}

PolicyParams::PolicyParams(const Architecture& arch) : arch_(arch) {
  arch_.vocab.validate();
  if (arch_.hidden_layer && arch_.hidden_width < 1)
    throw InvariantError("hidden_width must be >= 1");
  std::size_t offset = 0;
  auto place = [&](Block& b, int rows, int cols) {
    b.rows = rows;
    b.cols = cols;
    b.weight = offset;
    offset += static_cast<std::size_t>(rows) * cols;
    b.bias = offset;
    offset += static_cast<std::size_t>(rows);
  };
  if (arch_.hidden_layer) place(hidden_, arch_.hidden_width, arch_.feature_dim());
  for (int k = 0; k < kNumHeads; ++k) {
    const Head h = static_cast<Head>(k);
    place(heads_[static_cast<std::size_t>(k)], arch_.vocab.size(h),
          arch_.body_dim() + arch_.conditioning_dim(h));
  }
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

PolicyParams PolicyParams::random(const Architecture& arch, double scale, Rng& rng) {
  PolicyParams p(arch);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::Index i = 0; i < p.theta_.size(); ++i) p.theta_(i) = u(rng);
  return p;
}

Eigen::Map<const Eigen::MatrixXd> PolicyParams::hidden_weight() const {
  return {theta_.data() + hidden_.weight, hidden_.rows, hidden_.cols};
}
Eigen::Map<const Eigen::VectorXd> PolicyParams::hidden_bias() const {
  return {theta_.data() + hidden_.bias, hidden_.rows};
}
Eigen::Map<const Eigen::MatrixXd> PolicyParams::head_weight(Head h) const {
  const Block& b = head_block(h);
  return {theta_.data() + b.weight, b.rows, b.cols};
}
Eigen::Map<const Eigen::VectorXd> PolicyParams::head_bias(Head h) const {
  const Block& b = head_block(h);
  return {theta_.data() + b.bias, b.rows};
}
Eigen::Map<Eigen::MatrixXd> PolicyParams::head_weight(Head h) {
  const Block& b = head_block(h);
  return {theta_.data() + b.weight, b.rows, b.cols};
}
Eigen::Map<Eigen::VectorXd> PolicyParams::head_bias(Head h) {
  const Block& b = head_block(h);
  return {theta_.data() + b.bias, b.rows};
}

SlotTokens absent_tokens() {
  SlotTokens t;
  t.tokens[0] = kAbsent;
  t.count = 1;
  return t;
}

SlotTokens encode_object(const SceneObject& obj, double gap_m, const Vocabulary& vocab) {
  SlotTokens t;
  t.tokens = {kPresent,
              obj.kind == ObjectKind::kVehicle ? kVehicleToken : kPedestrianToken,
              vocab.distance_bucket(gap_m), vocab.speed_bucket(obj.speed)};
  t.count = kNumHeads;
  return t;
}

double DetectionSequence::logprob() const {
  double total = 0.0;
  for (const auto& s : slots) {
    for (int k = 0; k < s.tokens.count; ++k) total += s.logprob[static_cast<std::size_t>(k)];
  }
  return total;
}

std::vector<SceneObject> DetectionSequence::objects() const {
  std::vector<SceneObject> out;
  for (const auto& s : slots) {
    if (s.object) out.push_back(*s.object);
  }
  return out;
}

std::vector<double> DetectionSequence::probs() const {
  std::vector<double> out;
  out.reserve(slots.size());
  for (const auto& s : slots) {
    double p = 1.0;
    for (int k = 0; k < s.tokens.count; ++k) p *= s.prob[static_cast<std::size_t>(k)];
    out.push_back(p);
  }
  return out;
}

std::vector<SlotTokens> DetectionSequence::tokens() const {
  std::vector<SlotTokens> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back(s.tokens);
  return out;
}

SceneObject decode_object(const SlotTokens& tokens,
                          const std::optional<SensorReading>& reading,
                          const EgoState& ego, const Vocabulary& vocab,
                          double ego_length, int slot_index) {
  if (!tokens.present() || tokens.count < kNumHeads)
    throw std::invalid_argument("decode_object: slot is not a complete detection");
  SceneObject obj;
  obj.id = 1000 + slot_index;
  if (tokens.tokens[1] == kVehicleToken) {
    obj.kind = ObjectKind::kVehicle;
    obj.width = 2.0;
    obj.height = 1.8;
    obj.depth = 4.5;
  } else {
    obj.kind = ObjectKind::kPedestrian;
    obj.width = 0.5;
    obj.height = 1.8;
    obj.depth = 0.5;
  }
  obj.max_brake = kAssumedMaxBrake;
  obj.lane = ego.lane + (reading ? static_cast<int>(std::lround(reading->lane_offset)) : 0);
  const double g = vocab.distance_mid(tokens.tokens[2]);
  obj.position = ego.position + 0.5 * ego_length + g + 0.5 * obj.depth;
  obj.speed = vocab.speed_mid(tokens.tokens[3]);
  return obj;
}

Eigen::VectorXd head_distribution(const PolicyParams& theta,
                                  const Eigen::VectorXd& features,
                                  std::span<const int> emitted, Head head) {
  const Eigen::VectorXd h = body(theta, features);
  Eigen::VectorXd p = logits(
      theta, head_input(theta, h, head, emitted.first(static_cast<std::size_t>(head_index(head)))),
      head);
  softmax_inplace(p);
  return p;
}

DetectionSequence sample(const PolicyParams& theta, const SensorFrame& frame,
                         const EgoState& ego, double ego_length, Rng& rng) {
  return decode_frame(theta, frame, ego, ego_length, [&](const Eigen::VectorXd& p) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p(i);
      if (draw < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  });
}

DetectionSequence argmax_detect(const PolicyParams& theta, const SensorFrame& frame,
                                const EgoState& ego, double ego_length) {
  return decode_frame(theta, frame, ego, ego_length, [](const Eigen::VectorXd& p) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i) {
      if (p(i) > p(best)) best = i;
    }
    return static_cast<int>(best);
  });
}

LogProbGrad logprob_and_grad(const PolicyParams& theta, const SensorFrame& frame,
                             std::span<const SlotTokens> tokens,
                             std::span<const TokenRewards> rewards) {
  return logprob_and_grad(theta, featurize(frame, theta.arch().vocab), tokens, rewards);
}

LogProbGrad logprob_and_grad(const PolicyParams& theta,
                             const Eigen::MatrixXd& features,
                             std::span<const SlotTokens> tokens,
                             std::span<const TokenRewards> rewards) {
  if (tokens.size() != static_cast<std::size_t>(features.cols()))
    throw std::invalid_argument("logprob_and_grad: token slots do not match frame slots");
  if (rewards.size() != tokens.size())
    throw std::invalid_argument("logprob_and_grad: rewards not aligned with tokens");

  const Architecture& arch = theta.arch();
  const int body_dim = arch.body_dim();
  LogProbGrad out;
  out.grad = Eigen::VectorXd::Zero(theta.flat().size());
  Eigen::VectorXd& g = out.grad;

  for (std::size_t s = 0; s < tokens.size(); ++s) {
    const SlotTokens& t = tokens[s];
    if (t.count < 1 || t.count > kNumHeads)
      throw std::invalid_argument("logprob_and_grad: malformed slot tokens");
    if (t.tokens[0] == kAbsent ? t.count != 1 : t.count != kNumHeads)
      throw std::invalid_argument("logprob_and_grad: token count inconsistent with presence");
    const TokenRewards& r = rewards[s];
    bool any = false;
    for (int k = 0; k < t.count; ++k) any = any || r[static_cast<std::size_t>(k)] != 0.0;
    if (!any) continue;

    const Eigen::VectorXd x = features.col(static_cast<Eigen::Index>(s));
    const Eigen::VectorXd h = body(theta, x);
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(body_dim);
    const std::span<const int> emitted(t.tokens.data(), kNumHeads);

    for (int k = 0; k < t.count; ++k) {
      const double reward = r[static_cast<std::size_t>(k)];
      if (reward == 0.0) continue;
      const Head head = static_cast<Head>(k);
      const int a = t.tokens[static_cast<std::size_t>(k)];
      const Eigen::VectorXd z = head_input(theta, h, head, emitted.first(static_cast<std::size_t>(k)));
      Eigen::VectorXd p = logits(theta, z, head);
      if (a < 0 || a >= p.size()) throw std::invalid_argument("token out of range");
      const double logit_a = p(a);
      double log_norm = 0.0;
      softmax_inplace(p, &log_norm);
      out.value += reward * (logit_a - log_norm);

      Eigen::VectorXd dlogit = -reward * p;
      dlogit(a) += reward;
      const auto& blk = theta.head_block(head);
      Eigen::Map<Eigen::MatrixXd> dW(g.data() + blk.weight, blk.rows, blk.cols);
      Eigen::Map<Eigen::VectorXd> db(g.data() + blk.bias, blk.rows);
      dW.noalias() += dlogit * z.transpose();
      db += dlogit;
      if (arch.hidden_layer)
        dh.noalias() += theta.head_weight(head).leftCols(body_dim).transpose() * dlogit;
    }

    if (arch.hidden_layer) {
      const Eigen::VectorXd dpre = (dh.array() * (1.0 - h.array().square())).matrix();
      const auto& blk = theta.hidden_block();
      Eigen::Map<Eigen::MatrixXd> dW(g.data() + blk.weight, blk.rows, blk.cols);
      Eigen::Map<Eigen::VectorXd> db(g.data() + blk.bias, blk.rows);
      dW.noalias() += dpre * x.transpose();
      db += dpre;
    }
  }
  return out;
}

std::vector<std::array<double, kNumHeads>> token_logprobs(
    const PolicyParams& theta, const Eigen::MatrixXd& features,
    std::span<const SlotTokens> tokens) {
  if (tokens.size() != static_cast<std::size_t>(features.cols()))
    throw std::invalid_argument("token_logprobs: token slots do not match frame slots");
  std::vector<std::array<double, kNumHeads>> out(tokens.size());
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    out[s].fill(0.0);
    const SlotTokens& t = tokens[s];
    const Eigen::VectorXd h = body(theta, features.col(static_cast<Eigen::Index>(s)));
    const std::span<const int> emitted(t.tokens.data(), kNumHeads);
    for (int k = 0; k < t.count; ++k) {
      const Head head = static_cast<Head>(k);
      Eigen::VectorXd z = logits(
          theta, head_input(theta, h, head, emitted.first(static_cast<std::size_t>(k))), head);
      const double logit_a = z(t.tokens[static_cast<std::size_t>(k)]);
      double log_norm = 0.0;
      softmax_inplace(z, &log_norm);
      out[s][static_cast<std::size_t>(k)] = logit_a - log_norm;
    }
  }
  return out;
}

void write_checkpoint(std::ostream& out, const PolicyParams& theta) {
  const Architecture& a = theta.arch();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, a.vocab.n_distance);
  put<double>(out, a.vocab.distance_lo);
  put<double>(out, a.vocab.distance_hi);
  put<std::int32_t>(out, a.vocab.n_speed);
  put<double>(out, a.vocab.speed_lo);
  put<double>(out, a.vocab.speed_hi);
  put<std::uint8_t>(out, a.hidden_layer ? 1 : 0);
  put<std::int32_t>(out, a.hidden_width);
  put<std::int32_t>(out, a.feature_dim());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(theta.flat().size()));
  out.write(reinterpret_cast<const char*>(theta.flat().data()),
            static_cast<std::streamsize>(theta.flat().size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

PolicyParams read_checkpoint(std::istream& in, const Vocabulary& expected) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a safeperc checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Architecture arch;
  arch.vocab.n_distance = get<std::int32_t>(in);
  arch.vocab.distance_lo = get<double>(in);
  arch.vocab.distance_hi = get<double>(in);
  arch.vocab.n_speed = get<std::int32_t>(in);
  arch.vocab.speed_lo = get<double>(in);
  arch.vocab.speed_hi = get<double>(in);
  if (!(arch.vocab == expected)) throw std::runtime_error("checkpoint vocabulary mismatch");
  arch.hidden_layer = get<std::uint8_t>(in) != 0;
  arch.hidden_width = get<std::int32_t>(in);
  const auto feature_dim = get<std::int32_t>(in);
  if (feature_dim != arch.feature_dim())
    throw std::runtime_error("checkpoint feature dimension mismatch");
  const auto n = get<std::uint64_t>(in);
  PolicyParams theta(arch);
  if (n != static_cast<std::uint64_t>(theta.flat().size()))
    throw std::runtime_error("checkpoint parameter count mismatch");
  in.read(reinterpret_cast<char*>(theta.flat().data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  if (!theta.flat().allFinite()) throw std::runtime_error("checkpoint holds non-finite weights");
  return theta;
}

void save_checkpoint(const std::string& path, const PolicyParams& theta) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp);
    write_checkpoint(out, theta);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place at " + path);
}

PolicyParams load_checkpoint(const std::string& path, const Vocabulary& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(in, expected);
}

}  // namespace safeperc

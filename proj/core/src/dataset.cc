#include "jumpy/dataset.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "jumpy/errors.h"
#include "jumpy/io.h"
#include "jumpy/parallel.h"

namespace jumpy::data {
namespace {

constexpr char kMagic[5] = {'J', 'M', 'P', 'D', '1'};
constexpr std::size_t kHashBytes = 32;

// Stream ids under an episode seed.
constexpr std::uint64_t kResetStream = 0;
constexpr std::uint64_t kPolicyStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw StorageError("dataset: truncated file");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void append_state(std::vector<float>& out, const env::EnvState& s) {
  for (double v : s.to_vector()) out.push_back(static_cast<float>(v));
}

}  // namespace

std::span<const float> Trajectory::state(int t) const {
  if (t < 0 || t > steps()) throw DomainError("Trajectory::state: index out of range");
  return std::span<const float>(states).subspan(static_cast<std::size_t>(t) * env::kStateDim,
                                                env::kStateDim);
}

std::span<const float> Trajectory::action(int t) const {
  if (t < 0 || t >= steps()) throw DomainError("Trajectory::action: index out of range");
  return std::span<const float>(actions).subspan(static_cast<std::size_t>(t) * env::kActionDim,
                                                 env::kActionDim);
}

std::size_t Dataset::transition_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += static_cast<std::size_t>(e.steps());
  return n;
}

Trajectory generate_episode(std::uint64_t seed, bool motion_noise, int segment_steps) {
  if (segment_steps < 1) throw DomainError("generate_episode: segment_steps must be >= 1");
  Trajectory traj;
  traj.seed = seed;
  RandomStream policy_rng(derive_seed(seed, kPolicyStream));
  traj.policies[0] = env::policy_from_index(static_cast<int>(policy_rng.index(env::kBasePolicyCount)));
  traj.policies[1] = env::policy_from_index(static_cast<int>(policy_rng.index(env::kBasePolicyCount)));
  RandomStream noise_rng(derive_seed(seed, kNoiseStream));

  const int steps = 2 * segment_steps;
  traj.states.reserve(static_cast<std::size_t>(steps + 1) * env::kStateDim);
  traj.actions.reserve(static_cast<std::size_t>(steps) * env::kActionDim);

  env::EnvState s = env::reset(derive_seed(seed, kResetStream));
  append_state(traj.states, s);
  for (int t = 0; t < steps; ++t) {
    const env::BasePolicyId id = traj.policies[t < segment_steps ? 0 : 1];
    const env::EnvAction a = env::base_policy_action(id, s).clamped();
    for (double v : a.to_vector()) traj.actions.push_back(static_cast<float>(v));
    s = env::step(s, a, motion_noise ? &noise_rng : nullptr);
    append_state(traj.states, s);
  }
  return traj;
}

bool replay_matches(const Trajectory& trajectory, bool motion_noise) {
  if (trajectory.steps() % 2 != 0) return false;
  const Trajectory again = generate_episode(trajectory.seed, motion_noise, trajectory.steps() / 2);
  return again.policies == trajectory.policies && again.states.size() == trajectory.states.size() &&
         again.actions.size() == trajectory.actions.size() &&
         std::memcmp(again.states.data(), trajectory.states.data(),
                     trajectory.states.size() * sizeof(float)) == 0 &&
         std::memcmp(again.actions.data(), trajectory.actions.data(),
                     trajectory.actions.size() * sizeof(float)) == 0;
}

std::uint64_t episode_seed(std::uint64_t master_seed, std::size_t episode_index) {
  return derive_seed(master_seed, episode_index);
}

Dataset generate_dataset(int episode_count, std::uint64_t master_seed, bool motion_noise,
                         int threads, int segment_steps) {
  if (episode_count < 1) throw DomainError("generate_dataset: episode_count must be >= 1");
  Dataset ds;
  ds.master_seed = master_seed;
  ds.motion_noise = motion_noise;
  ds.episode_steps = 2 * segment_steps;
  ds.episodes.resize(static_cast<std::size_t>(episode_count));
  parallel_for(ds.episodes.size(), threads, [&](std::size_t i) {
    ds.episodes[i] = generate_episode(episode_seed(master_seed, i), motion_noise, segment_steps);
  });
  return ds;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(dataset.episodes.size()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(dataset.episode_steps));
  w.uint<std::uint32_t>(env::kStateDim);
  w.uint<std::uint32_t>(env::kActionDim);
  w.uint<std::uint64_t>(dataset.master_seed);
  w.uint<std::uint8_t>(dataset.motion_noise ? 1 : 0);
  for (const Trajectory& e : dataset.episodes) {
    if (e.steps() != dataset.episode_steps ||
        e.states.size() != static_cast<std::size_t>(e.steps() + 1) * env::kStateDim) {
      throw StorageError("serialize_dataset: episode length disagrees with header");
    }
    w.uint<std::uint64_t>(e.seed);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(e.policies[0]));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(e.policies[1]));
    for (float v : e.states) w.f32(v);
    for (float v : e.actions) w.f32(v);
  }
  const Sha256Digest digest = sha256(w.buffer());
  w.bytes(digest.data(), digest.size());
  return std::move(w.buffer());
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + kHashBytes) throw StorageError("dataset: file too short");
  const auto body = bytes.first(bytes.size() - kHashBytes);
  const Sha256Digest digest = sha256(body);
  if (std::memcmp(digest.data(), bytes.data() + body.size(), kHashBytes) != 0) {
    throw StorageError("dataset: content hash mismatch");
  }
  ByteReader r(body);
  const auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw StorageError("dataset: bad magic");
  const auto count = r.uint<std::uint32_t>();
  const auto steps = r.uint<std::uint32_t>();
  const auto state_dim = r.uint<std::uint32_t>();
  const auto action_dim = r.uint<std::uint32_t>();
  if (state_dim != env::kStateDim || action_dim != env::kActionDim) {
    throw StorageError("dataset: header dims (" + std::to_string(state_dim) + ", " +
                       std::to_string(action_dim) + ") do not match the environment (12, 3)");
  }
  if (steps == 0 || steps % 2 != 0) throw StorageError("dataset: episode length must be even and positive");
  Dataset ds;
  ds.master_seed = r.uint<std::uint64_t>();
  ds.motion_noise = r.uint<std::uint8_t>() != 0;
  ds.episode_steps = static_cast<int>(steps);
  ds.episodes.resize(count);
  for (Trajectory& e : ds.episodes) {
    e.seed = r.uint<std::uint64_t>();
    e.policies[0] = env::policy_from_index(r.uint<std::uint8_t>());
    e.policies[1] = env::policy_from_index(r.uint<std::uint8_t>());
    e.states.resize(static_cast<std::size_t>(steps + 1) * state_dim);
    for (float& v : e.states) v = r.f32();
    e.actions.resize(static_cast<std::size_t>(steps) * action_dim);
    for (float& v : e.actions) v = r.f32();
  }
  if (r.position() != body.size()) throw StorageError("dataset: trailing bytes before hash");
  return ds;
}

std::string write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const std::vector<std::uint8_t> bytes = serialize_dataset(dataset);
  write_file_atomic(path, bytes);
  return to_hex(std::span<const std::uint8_t>(bytes).last(kHashBytes));
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return parse_dataset(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

Snippet snippet_at(const Dataset& dataset, int episode, int start, int context) {
  if (context < 1) throw DomainError("snippet: K must be >= 1");
  if (episode < 0 || episode >= static_cast<int>(dataset.episodes.size())) {
    throw DomainError("snippet: episode index out of range");
  }
  const Trajectory& e = dataset.episodes[static_cast<std::size_t>(episode)];
  if (context > e.steps()) throw DomainError("snippet: K exceeds episode length");
  if (start < 0 || start + context > e.steps()) throw DomainError("snippet: window out of range");
  Snippet s;
  s.episode = episode;
  s.start = start;
  s.states.resize(env::kStateDim, context + 1);
  s.actions.resize(env::kActionDim, context);
  for (int k = 0; k <= context; ++k) {
    const auto st = e.state(start + k);
    for (int d = 0; d < env::kStateDim; ++d) s.states(d, k) = st[static_cast<std::size_t>(d)];
  }
  for (int k = 0; k < context; ++k) {
    const auto a = e.action(start + k);
    for (int d = 0; d < env::kActionDim; ++d) s.actions(d, k) = a[static_cast<std::size_t>(d)];
  }
  return s;
}

Snippet sample_snippet(const Dataset& dataset, RandomStream& rng, int context) {
  if (dataset.episodes.empty()) throw DomainError("sample_snippet: empty dataset");
  if (context < 1) throw DomainError("sample_snippet: K must be >= 1");
  if (context > dataset.episode_steps) throw DomainError("sample_snippet: K exceeds episode length");
  const auto episode = static_cast<int>(rng.index(dataset.episodes.size()));
  const auto start =
      static_cast<int>(rng.index(static_cast<std::uint64_t>(dataset.episode_steps - context + 1)));
  return snippet_at(dataset, episode, start, context);
}

DeltaScale delta_scale_from_samples(const Eigen::MatrixXd& abs_deltas) {
  if (abs_deltas.cols() == 0) throw DomainError("delta stats: no samples");
  DeltaScale out;
  out.scale.resize(abs_deltas.rows());
  std::vector<double> column(static_cast<std::size_t>(abs_deltas.cols()));
  for (Eigen::Index d = 0; d < abs_deltas.rows(); ++d) {
    for (Eigen::Index i = 0; i < abs_deltas.cols(); ++i) column[static_cast<std::size_t>(i)] = abs_deltas(d, i);
    std::sort(column.begin(), column.end());
    const double rank = kDeltaPercentile / 100.0 * static_cast<double>(column.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, column.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    const double q = column[lo] + frac * (column[hi] - column[lo]);
    out.scale(d) = std::max(q, kDeltaScaleFloor);
  }
  return out;
}

DeltaScale compute_delta_stats(const Dataset& dataset, int context, std::uint64_t seed, int sample_count) {
  if (dataset.episodes.empty()) throw DomainError("compute_delta_stats: empty dataset");
  if (sample_count < 1) throw DomainError("compute_delta_stats: sample_count must be >= 1");
  RandomStream rng(seed);
  Eigen::MatrixXd deltas(env::kStateDim, sample_count);
  for (int i = 0; i < sample_count; ++i) {
    const Snippet s = sample_snippet(dataset, rng, context);
    deltas.col(i) = (s.states.col(context) - s.states.col(0)).cwiseAbs();
  }
  return delta_scale_from_samples(deltas);
}

Eigen::VectorXd normalize_delta(const Eigen::VectorXd& delta, const DeltaScale& scale) {
  if (delta.size() != scale.scale.size()) throw ShapeError("normalize_delta: length mismatch");
  if ((scale.scale.array() <= 0.0).any()) throw DomainError("normalize_delta: non-positive scale");
  return (delta.array() / scale.scale.array()).cwiseMax(-1.0).cwiseMin(1.0).matrix();
}

Eigen::VectorXd denormalize_delta(const Eigen::VectorXd& normalized, const DeltaScale& scale) {
  if (normalized.size() != scale.scale.size()) throw ShapeError("denormalize_delta: length mismatch");
  if ((scale.scale.array() <= 0.0).any()) throw DomainError("denormalize_delta: non-positive scale");
  return (normalized.array() * scale.scale.array()).matrix();
}

}  // namespace jumpy::data

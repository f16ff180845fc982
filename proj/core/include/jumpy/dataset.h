#ifndef JUMPY_DATASET_H_
#define JUMPY_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "jumpy/env.h"
#include "jumpy/random.h"

namespace jumpy::data {

inline constexpr int kEpisodeSteps = 400;
inline constexpr int kSegmentSteps = 200;
inline constexpr int kDeltaSampleCount = 100000;
inline constexpr double kDeltaPercentile = 99.5;
inline constexpr double kDeltaScaleFloor = 1e-3;

// One recorded episode. States and actions are stored at float32 precision,
// exactly as they appear in the dataset file.
struct Trajectory {
  std::uint64_t seed = 0;
  std::array<env::BasePolicyId, 2> policies{};
  std::vector<float> states;   // (steps + 1) x kStateDim, row-major
  std::vector<float> actions;  // steps x kActionDim, row-major

  int steps() const { return static_cast<int>(actions.size() / env::kActionDim); }
  std::span<const float> state(int t) const;
  std::span<const float> action(int t) const;
};

struct Dataset {
  std::uint64_t master_seed = 0;
  bool motion_noise = true;
  int episode_steps = kEpisodeSteps;
  std::vector<Trajectory> episodes;

  std::size_t transition_count() const;
};

// Rolls out two uniformly drawn base policies (with replacement) for
// `segment_steps` each. All randomness derives from `episode_seed`.
Trajectory generate_episode(std::uint64_t episode_seed, bool motion_noise,
                            int segment_steps = kSegmentSteps);

// Re-simulates an episode from its seed and compares states and actions
// bit-for-bit at storage precision.
bool replay_matches(const Trajectory& trajectory, bool motion_noise);

std::uint64_t episode_seed(std::uint64_t master_seed, std::size_t episode_index);

Dataset generate_dataset(int episode_count, std::uint64_t master_seed, bool motion_noise = true,
                         int threads = 1, int segment_steps = kSegmentSteps);

// JMPD1 file layout (little-endian):
//   "JMPD1" | u32 episodes | u32 T | u32 state_dim | u32 action_dim |
//   u64 master_seed | u8 noise_flag |
//   per episode: u64 seed | u8 policy0 | u8 policy1 |
//                f32[(T+1) * state_dim] | f32[T * action_dim] |
//   32-byte SHA-256 of everything before it.
std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::span<const std::uint8_t> bytes);

// Returns the trailing content hash (hex).
std::string write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

// K-step training window: states s_t..s_{t+K} (12 x (K+1)), actions
// a_t..a_{t+K-1} (3 x K).
struct Snippet {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  int episode = 0;
  int start = 0;
};

Snippet snippet_at(const Dataset& dataset, int episode, int start, int context);
// Uniform over (episode, start in [0, T - K]).
Snippet sample_snippet(const Dataset& dataset, RandomStream& rng, int context);

// Per-dimension scale for K-step state deltas.
struct DeltaScale {
  Eigen::VectorXd scale;
};

// Per row of `abs_deltas` (dims x samples): the 99.5th percentile (linear
// interpolation between order statistics), floored at 1e-3.
DeltaScale delta_scale_from_samples(const Eigen::MatrixXd& abs_deltas);

// 99.5th percentile of |s_{t+K} - s_t| over `sample_count` uniformly sampled
// windows, floored at 1e-3.
DeltaScale compute_delta_stats(const Dataset& dataset, int context, std::uint64_t seed,
                               int sample_count = kDeltaSampleCount);

// clamp(delta / scale, -1, 1): the training-target form.
Eigen::VectorXd normalize_delta(const Eigen::VectorXd& delta, const DeltaScale& scale);
// norm * scale, unclamped.
Eigen::VectorXd denormalize_delta(const Eigen::VectorXd& normalized, const DeltaScale& scale);

}  // namespace jumpy::data

#endif  // JUMPY_DATASET_H_

#ifndef JUMPY_PLANNER_H_
#define JUMPY_PLANNER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "jumpy/env.h"
#include "jumpy/nn/gaussian.h"
#include "jumpy/skill_model.h"

// Cross-entropy-method MPC in latent-skill space over a jumpy model. With one
// iteration and the standard-normal proposal this is random shooting.
namespace jumpy::plan {

using nn::RealMatrix;
using nn::RealVector;

struct PlannerConfig {
  int iterations = 1;          // I
  int samples = 1000;          // N
  int horizon = 3;             // H, in model applications
  double elite_fraction = 0.1; // eta
  double discount = 1.0;       // gamma_K
  int hold_steps = 2;
  double init_std = 1.0;
  double std_floor = 0.05;
  int threads = 1;

  int elite_count() const;
  // Throws DomainError on any out-of-range field.
  void validate() const;
};

// One Gaussian per horizon position.
struct Proposal {
  std::vector<nn::DiagGaussian> steps;

  static Proposal initial(int horizon, int latent_dim, double stddev);
};

struct PlanResult {
  std::vector<RealMatrix> plans;         // N x (latent_dim x H)
  std::vector<RealMatrix> trajectories;  // N x (12 x (H+1))
  RealVector scores;
  int best_index = 0;
  RealVector chosen_z;
  double best_score = 0.0;
  // Indices of the elites of the final iteration, best first.
  std::vector<int> elites;
};

// sum_{h=0}^{H} gamma^h R(s_h) over the columns of `trajectory`.
double score(const RealMatrix& trajectory, const env::TaskSpec& task, double discount);
double score(std::span<const env::EnvState> trajectory, const env::TaskSpec& task, double discount);

// Columns s_0 = state, s_{h+1} = decode_jumpy(s_h, z_h).
RealMatrix rollout_imaginary(const RealVector& state, const RealMatrix& latents,
                             const skill::SkillModel& model);

// Refit: per-position elite mean and population std, floored.
Proposal update_proposal(std::span<const RealMatrix> elites, double std_floor);

// All sampling derives from `seed`, so equal seeds give equal results
// whatever the thread count.
PlanResult plan(const RealVector& state, const skill::SkillModel& model, const env::TaskSpec& task,
                const PlannerConfig& config, std::uint64_t seed);

// Indices sorted by score descending, ties by index ascending.
std::vector<int> rank_by_score(const RealVector& scores);

struct PlanCache {
  std::optional<RealVector> latent;
  int served = 0;
  double planned_score = 0.0;
};

struct ActResult {
  env::EnvAction action;
  RealVector latent;
  bool replanned = false;
  double planned_score = 0.0;
};

// Reuses the cached latent until it has served hold_steps actions, otherwise
// plans afresh with `plan_seed`; the action is the clamped decoder mean.
ActResult act(const env::EnvState& state, const skill::SkillModel& model, const env::TaskSpec& task,
              const PlannerConfig& config, std::uint64_t plan_seed, PlanCache& cache);

}  // namespace jumpy::plan

#endif  // JUMPY_PLANNER_H_

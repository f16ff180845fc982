#include "jumpy/planner.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "jumpy/errors.h"
#include "jumpy/parallel.h"

namespace jumpy::plan {
namespace {

// Rollouts are evaluated in chunks of this many samples; chunking affects
// scheduling only, never values.
constexpr int kRolloutChunk = 128;

void require(bool ok, const std::string& message) {
  if (!ok) throw DomainError("PlannerConfig: " + message);
}

env::EnvState column_state(const RealMatrix& m, Eigen::Index c) {
  return env::EnvState::from_vector(std::span<const double>(m.col(c).data(), env::kStateDim));
}

}  // namespace

int PlannerConfig::elite_count() const {
  return static_cast<int>(std::ceil(elite_fraction * static_cast<double>(samples)));
}

void PlannerConfig::validate() const {
  require(iterations >= 1, "iterations must be >= 1");
  require(samples >= 1, "samples must be >= 1");
  require(horizon >= 1, "horizon must be >= 1");
  require(elite_fraction > 0.0 && elite_fraction <= 1.0, "elite_fraction must be in (0, 1]");
  require(elite_count() >= 1, "ceil(elite_fraction * samples) must be >= 1");
  require(discount >= 0.0 && discount <= 1.0, "discount must be in [0, 1]");
  require(hold_steps >= 1, "hold_steps must be >= 1");
  require(init_std > 0.0 && std::isfinite(init_std), "init_std must be positive");
  require(std_floor >= 0.0 && std::isfinite(std_floor), "std_floor must be >= 0");
  require(threads >= 1, "threads must be >= 1");
}

Proposal Proposal::initial(int horizon, int latent_dim, double stddev) {
  if (horizon < 0 || latent_dim < 1 || !(stddev > 0.0)) throw DomainError("Proposal::initial: bad arguments");
  Proposal p;
  p.steps.assign(static_cast<std::size_t>(horizon),
                 nn::DiagGaussian{RealVector::Zero(latent_dim),
                                  RealVector::Constant(latent_dim, std::log(stddev))});
  return p;
}

double score(const RealMatrix& trajectory, const env::TaskSpec& task, double discount) {
  double total = 0.0;
  double weight = 1.0;
  for (Eigen::Index h = 0; h < trajectory.cols(); ++h) {
    total += weight * env::reward(task, column_state(trajectory, h));
    weight *= discount;
  }
  return total;
}

double score(std::span<const env::EnvState> trajectory, const env::TaskSpec& task, double discount) {
  double total = 0.0;
  double weight = 1.0;
  for (const env::EnvState& s : trajectory) {
    total += weight * env::reward(task, s);
    weight *= discount;
  }
  return total;
}

RealMatrix rollout_imaginary(const RealVector& state, const RealMatrix& latents,
                             const skill::SkillModel& model) {
  if (state.size() != env::kStateDim) throw ShapeError("rollout_imaginary: state must have 12 entries");
  if (latents.cols() > 0 && latents.rows() != model.config.latent_dim) {
    throw ShapeError("rollout_imaginary: latent rows must equal latent_dim");
  }
  RealMatrix traj(env::kStateDim, latents.cols() + 1);
  traj.col(0) = state;
  for (Eigen::Index h = 0; h < latents.cols(); ++h) {
    traj.col(h + 1) = skill::decode_jumpy(model, traj.col(h), latents.col(h));
  }
  return traj;
}

Proposal update_proposal(std::span<const RealMatrix> elites, double std_floor) {
  if (elites.empty()) throw DomainError("update_proposal: no elites");
  const Eigen::Index dim = elites.front().rows();
  const Eigen::Index horizon = elites.front().cols();
  for (const RealMatrix& e : elites) {
    if (e.rows() != dim || e.cols() != horizon) throw ShapeError("update_proposal: elite shapes differ");
  }
  const double n = static_cast<double>(elites.size());
  Proposal p;
  p.steps.resize(static_cast<std::size_t>(horizon));
  for (Eigen::Index h = 0; h < horizon; ++h) {
    RealVector mean = RealVector::Zero(dim);
    for (const RealMatrix& e : elites) mean += e.col(h);
    mean /= n;
    RealVector var = RealVector::Zero(dim);
    for (const RealMatrix& e : elites) var += (e.col(h) - mean).cwiseAbs2();
    var /= n;
    const RealVector stddev = var.cwiseSqrt().cwiseMax(std_floor);
    auto& g = p.steps[static_cast<std::size_t>(h)];
    g.mean = mean;
    g.log_std = stddev.array().log().matrix();
  }
  return p;
}

std::vector<int> rank_by_score(const RealVector& scores) {
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  return order;
}

PlanResult plan(const RealVector& state, const skill::SkillModel& model, const env::TaskSpec& task,
                const PlannerConfig& config, std::uint64_t seed) {
  config.validate();
  if (state.size() != env::kStateDim) throw ShapeError("plan: state must have 12 entries");
  const int n = config.samples;
  const int horizon = config.horizon;
  const int dim = model.config.latent_dim;
  RandomStream rng(seed);
  Proposal proposal = Proposal::initial(horizon, dim, config.init_std);

  // phi(state) is shared by every sample's first jumpy step.
  const RealVector root_features = skill::embed_state(model, state);

  PlanResult result;
  for (int iter = 0; iter < config.iterations; ++iter) {
    result.plans.assign(static_cast<std::size_t>(n), RealMatrix(dim, horizon));
    for (auto& p : result.plans) {
      for (int h = 0; h < horizon; ++h) {
        const auto& g = proposal.steps[static_cast<std::size_t>(h)];
        for (int i = 0; i < dim; ++i) p(i, h) = g.mean(i) + std::exp(g.log_std(i)) * rng.gaussian();
      }
    }
    result.trajectories.assign(static_cast<std::size_t>(n), RealMatrix(env::kStateDim, horizon + 1));
    result.scores.resize(n);

    const int chunks = (n + kRolloutChunk - 1) / kRolloutChunk;
    parallel_for(static_cast<std::size_t>(chunks), config.threads, [&](std::size_t chunk) {
      const int begin = static_cast<int>(chunk) * kRolloutChunk;
      const int count = std::min(kRolloutChunk, n - begin);
      RealMatrix states = state.replicate(1, count);
      RealMatrix features = root_features.replicate(1, count);
      RealMatrix latents(dim, count);
      for (int j = 0; j < count; ++j) result.trajectories[static_cast<std::size_t>(begin + j)].col(0) = state;
      for (int h = 0; h < horizon; ++h) {
        for (int j = 0; j < count; ++j) latents.col(j) = result.plans[static_cast<std::size_t>(begin + j)].col(h);
        states = skill::decode_jumpy_batch(model, states, features, latents);
        for (int j = 0; j < count; ++j) {
          if (!states.col(j).allFinite()) {
            throw NumericalError("plan: non-finite imagined state for sample " + std::to_string(begin + j) +
                                 " at horizon step " + std::to_string(h + 1));
          }
          result.trajectories[static_cast<std::size_t>(begin + j)].col(h + 1) = states.col(j);
        }
        if (h + 1 < horizon) features = skill::embed_states(model, states);
      }
      for (int j = 0; j < count; ++j) {
        const auto idx = static_cast<std::size_t>(begin + j);
        result.scores(begin + j) = score(result.trajectories[idx], task, config.discount);
      }
    });

    const std::vector<int> order = rank_by_score(result.scores);
    result.elites.assign(order.begin(), order.begin() + config.elite_count());
    result.best_index = order.front();
    if (iter + 1 < config.iterations) {
      std::vector<RealMatrix> elite_plans;
      elite_plans.reserve(result.elites.size());
      for (int e : result.elites) elite_plans.push_back(result.plans[static_cast<std::size_t>(e)]);
      proposal = update_proposal(elite_plans, config.std_floor);
    }
  }
  result.best_score = result.scores(result.best_index);
  result.chosen_z = result.plans[static_cast<std::size_t>(result.best_index)].col(0);
  return result;
}

ActResult act(const env::EnvState& state, const skill::SkillModel& model, const env::TaskSpec& task,
              const PlannerConfig& config, std::uint64_t plan_seed, PlanCache& cache) {
  config.validate();
  const env::StateVector sv = state.to_vector();
  const RealVector s = Eigen::Map<const RealVector>(sv.data(), env::kStateDim);
  ActResult out;
  if (!cache.latent || cache.served >= config.hold_steps) {
    const PlanResult planned = plan(s, model, task, config, plan_seed);
    cache.latent = planned.chosen_z;
    cache.served = 0;
    cache.planned_score = planned.best_score;
    out.replanned = true;
  }
  const RealVector a = skill::decode_action(model, s, *cache.latent);
  out.action = env::EnvAction::from_vector(std::span<const double>(a.data(), env::kActionDim)).clamped();
  out.latent = *cache.latent;
  out.planned_score = cache.planned_score;
  ++cache.served;
  return out;
}

}  // namespace jumpy::plan

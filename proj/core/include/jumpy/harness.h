#ifndef JUMPY_HARNESS_H_
#define JUMPY_HARNESS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jumpy/env.h"
#include "jumpy/planner.h"
#include "jumpy/skill_model.h"

namespace jumpy::harness {

enum class VariantId : int {
  kRandomHl,
  kZeroshotPlanJumpy,
  kZeroshotPlanK1,
  kPlanFinetune,
  kBasePolicyReference,
};
inline constexpr int kVariantCount = 5;

std::string_view variant_name(VariantId v);
// Throws DomainError on unknown names.
VariantId parse_variant(std::string_view name);
std::vector<VariantId> all_variants();
bool is_planning_variant(VariantId v);
// base_policy_reference exists for the in-distribution tasks (scripted base
// policy) and reach_green (scripted reach).
bool has_reference(env::TaskId task);

// Models are borrowed; a variant that needs a missing one raises ConfigError.
struct Models {
  const skill::SkillModel* jumpy = nullptr;
  const skill::SkillModel* k1 = nullptr;
};

struct FinetuneConfig {
  int interval = 100;  // environment steps between finetune calls
  int steps = 200;     // gradient steps per call
};

struct EvalConfig {
  plan::PlannerConfig jumpy_planner;
  // Horizon in primitive steps.
  plan::PlannerConfig k1_planner;
  int episode_steps = 400;
  // Steps per random_hl latent; 0 means the jumpy model's K.
  int random_hl_hold = 0;
  FinetuneConfig finetune;
  bool motion_noise = true;
  bool record_states = true;
  int threads = 1;

  void validate() const;
};

struct TraceRow {
  int step = 0;
  double planned_score = 0.0;
  double reward = 0.0;
};

struct PlanCall {
  int step = 0;
  std::uint64_t seed = 0;
  double score = 0.0;
};

struct EvalRecord {
  env::TaskId task = env::TaskId::kReachRed;
  VariantId variant = VariantId::kRandomHl;
  std::uint64_t seed = 0;
  double total_return = 0.0;
  double max_reward = 0.0;
  int steps = 0;
  std::vector<TraceRow> trace;       // planning variants only
  std::vector<PlanCall> plan_calls;  // planning variants only
  std::vector<env::EnvState> states; // steps + 1 when recorded
};

struct EvalSummary {
  env::TaskId task = env::TaskId::kReachRed;
  VariantId variant = VariantId::kRandomHl;
  int seeds = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // sample std; 0 for one seed
  double mean_max_reward = 0.0;
  double std_max_reward = 0.0;
};

// Fills `triples` (when non-null) with the (s_t, z_t, s_{t+K}) data of a
// jumpy-planning episode.
EvalRecord run_episode(VariantId variant, env::TaskId task, const Models& models, const EvalConfig& config,
                       std::uint64_t seed, std::vector<skill::JumpyTriple>* triples = nullptr);

// Episode seeds depend on (master, task, index) only, so every variant of a
// task sees the same initial states.
std::uint64_t episode_seed(std::uint64_t master_seed, env::TaskId task, int index);

EvalSummary summarize(env::TaskId task, VariantId variant, std::span<const EvalRecord> records);

struct Evaluation {
  EvalSummary summary;
  std::vector<EvalRecord> records;
};

Evaluation evaluate(VariantId variant, env::TaskId task, int seeds, const Models& models,
                    const EvalConfig& config, std::uint64_t master_seed);

struct SweepCell {
  int horizon = 0;
  int hold = 0;
  Evaluation evaluation;
};

inline constexpr int kDefaultJumpyHorizons[] = {1, 2, 3, 5};
inline constexpr int kDefaultHolds[] = {1, 2, 10, 20, 100, 200};
inline constexpr int kDefaultK1Horizons[] = {1, 2, 3, 5, 10, 30, 50};

// Row-major over (horizon, hold).
std::vector<SweepCell> sweep_jumpy(env::TaskId task, std::span<const int> horizons, std::span<const int> holds,
                                   int seeds, const Models& models, const EvalConfig& config,
                                   std::uint64_t master_seed);
std::vector<SweepCell> sweep_k1(env::TaskId task, std::span<const int> horizons, int seeds, const Models& models,
                                const EvalConfig& config, std::uint64_t master_seed);

struct FinetuneReport {
  skill::SkillModel model;
  EvalSummary before;
  EvalSummary after;
  std::size_t train_triples = 0;
  std::size_t validation_triples = 0;
  double validation_error_before = 0.0;
  double validation_error_after = 0.0;
};

// Runs `episodes` jumpy-planning episodes, finetunes theta_s on the triples
// of all but the last fifth of them, measures jumpy error on that held-out
// fifth and re-evaluates on the same seeds.
FinetuneReport collect_and_finetune(env::TaskId task, const skill::SkillModel& model, const EvalConfig& config,
                                    int episodes, int finetune_steps, std::uint64_t seed);

// Throws DomainError when the record carries no trace.
std::vector<TraceRow> record_plan_trace(const EvalRecord& record);

// Replays every stored plan call and reports whether all scores match bitwise.
bool replay_plan_scores(const EvalRecord& record, const Models& models, const EvalConfig& config);

// --- emission -------------------------------------------------------------

std::string record_to_json(const EvalRecord& record);
EvalRecord record_from_json(std::string_view line);

std::string summary_csv_header();
std::string summary_csv_row(const EvalSummary& summary);
std::string sweep_csv_header();
std::string sweep_csv_row(const SweepCell& cell);
std::string trace_csv(std::span<const TraceRow> trace);

}  // namespace jumpy::harness

#endif  // JUMPY_HARNESS_H_

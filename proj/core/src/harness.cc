#include "jumpy/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "jumpy/errors.h"
#include "jumpy/parallel.h"

namespace jumpy::harness {
namespace {

using nn::RealVector;

// Streams under an episode seed.
constexpr std::uint64_t kResetStream = 0;
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kPlanStream = 2;
constexpr std::uint64_t kLatentStream = 3;
constexpr std::uint64_t kFinetuneStream = 4;

constexpr std::uint64_t kFinetuneReportStream = 0x6674;

const skill::SkillModel& require_model(const skill::SkillModel* m, VariantId v, const char* which) {
  if (m == nullptr) {
    throw ConfigError("variant " + std::string(variant_name(v)) + " requires the " + which + " model");
  }
  return *m;
}

RealVector to_eigen(const env::EnvState& s) {
  const env::StateVector v = s.to_vector();
  return Eigen::Map<const RealVector>(v.data(), env::kStateDim);
}

env::EnvAction to_action(const RealVector& a) {
  return env::EnvAction::from_vector(std::span<const double>(a.data(), env::kActionDim)).clamped();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct SampleStats {
  double mean = 0.0;
  double stddev = 0.0;
};

SampleStats sample_stats(const std::vector<double>& xs) {
  SampleStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

EvalConfig single_threaded(const EvalConfig& config) {
  EvalConfig c = config;
  c.threads = 1;
  c.jumpy_planner.threads = 1;
  c.k1_planner.threads = 1;
  return c;
}

}  // namespace

std::string_view variant_name(VariantId v) {
  switch (v) {
    case VariantId::kRandomHl: return "random_hl";
    case VariantId::kZeroshotPlanJumpy: return "zeroshot_plan_jumpy";
    case VariantId::kZeroshotPlanK1: return "zeroshot_plan_k1";
    case VariantId::kPlanFinetune: return "plan_finetune";
    case VariantId::kBasePolicyReference: return "base_policy_reference";
  }
  throw DomainError("unknown variant id " + std::to_string(static_cast<int>(v)));
}

VariantId parse_variant(std::string_view name) {
  for (VariantId v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw DomainError("unknown variant '" + std::string(name) + "'");
}

std::vector<VariantId> all_variants() {
  return {VariantId::kRandomHl, VariantId::kZeroshotPlanJumpy, VariantId::kZeroshotPlanK1,
          VariantId::kPlanFinetune, VariantId::kBasePolicyReference};
}

bool is_planning_variant(VariantId v) {
  return v == VariantId::kZeroshotPlanJumpy || v == VariantId::kZeroshotPlanK1 || v == VariantId::kPlanFinetune;
}

bool has_reference(env::TaskId task) {
  return env::reference_policy(task).has_value() || task == env::TaskId::kReachGreen;
}

void EvalConfig::validate() const {
  jumpy_planner.validate();
  k1_planner.validate();
  if (episode_steps < 1) throw DomainError("EvalConfig: episode_steps must be >= 1");
  if (random_hl_hold < 0) throw DomainError("EvalConfig: random_hl_hold must be >= 0");
  if (finetune.interval < 1 || finetune.steps < 0) throw DomainError("EvalConfig: bad finetune settings");
  if (threads < 1) throw DomainError("EvalConfig: threads must be >= 1");
}

EvalRecord run_episode(VariantId variant, env::TaskId task, const Models& models, const EvalConfig& config,
                       std::uint64_t seed, std::vector<skill::JumpyTriple>* triples) {
  config.validate();
  const env::TaskSpec spec = env::task_spec(task);
  EvalRecord record;
  record.task = task;
  record.variant = variant;
  record.seed = seed;
  record.steps = config.episode_steps;

  const skill::SkillModel* model = nullptr;
  const plan::PlannerConfig* planner = nullptr;
  std::optional<skill::SkillModel> local;  // plan_finetune's evolving copy
  std::optional<env::BasePolicyId> reference;
  switch (variant) {
    case VariantId::kRandomHl:
      model = &require_model(models.jumpy, variant, "jumpy");
      break;
    case VariantId::kZeroshotPlanJumpy:
      model = &require_model(models.jumpy, variant, "jumpy");
      planner = &config.jumpy_planner;
      break;
    case VariantId::kPlanFinetune:
      local = require_model(models.jumpy, variant, "jumpy");
      model = &*local;
      planner = &config.jumpy_planner;
      break;
    case VariantId::kZeroshotPlanK1:
      model = &require_model(models.k1, variant, "K=1");
      planner = &config.k1_planner;
      break;
    case VariantId::kBasePolicyReference:
      if (!has_reference(task)) {
        throw DomainError("base_policy_reference is undefined for task " + std::string(env::task_name(task)));
      }
      reference = env::reference_policy(task);
      break;
  }
  const bool collect = planner != nullptr && variant != VariantId::kZeroshotPlanK1;
  const int context = model != nullptr ? model->config.context : 1;
  const int random_hold = config.random_hl_hold > 0 ? config.random_hl_hold : context;

  RandomStream noise_rng(derive_seed(seed, kNoiseStream));
  RandomStream latent_rng(derive_seed(seed, kLatentStream));
  const std::uint64_t plan_root = derive_seed(seed, kPlanStream);

  env::EnvState state = env::reset(derive_seed(seed, kResetStream));
  std::vector<env::EnvState> visited{state};
  std::vector<RealVector> executed;
  std::vector<skill::JumpyTriple> collected;
  plan::PlanCache cache;
  RealVector random_latent;

  for (int t = 0; t < config.episode_steps; ++t) {
    if (variant == VariantId::kPlanFinetune && t > 0 && t % config.finetune.interval == 0 &&
        config.finetune.steps > 0 && !collected.empty()) {
      *local = skill::finetune(*local, collected, config.finetune.steps,
                               derive_seed(derive_seed(seed, kFinetuneStream), static_cast<std::uint64_t>(t)));
    }
    env::EnvAction action;
    double planned = 0.0;
    if (planner != nullptr) {
      const std::uint64_t plan_seed = derive_seed(plan_root, static_cast<std::uint64_t>(t));
      const plan::ActResult r = plan::act(state, *model, spec, *planner, plan_seed, cache);
      if (r.replanned) record.plan_calls.push_back({t, plan_seed, r.planned_score});
      action = r.action;
      planned = r.planned_score;
      if (collect) executed.push_back(r.latent);
    } else if (variant == VariantId::kRandomHl) {
      if (t % random_hold == 0) {
        random_latent.resize(model->config.latent_dim);
        for (Eigen::Index i = 0; i < random_latent.size(); ++i) random_latent(i) = latent_rng.gaussian();
      }
      action = to_action(skill::decode_action(*model, to_eigen(state), random_latent));
    } else if (reference) {
      action = env::base_policy_action(*reference, state).clamped();
    } else {
      action = env::scripted_reach_action(state, env::Color::kGreen).clamped();
    }

    state = env::step(state, action, config.motion_noise ? &noise_rng : nullptr);
    visited.push_back(state);
    const double r = env::reward(spec, state);
    record.total_return += r;
    record.max_reward = std::max(record.max_reward, r);
    if (planner != nullptr) record.trace.push_back({t, planned, r});
    if (collect && t + 1 >= context) {
      const int origin = t + 1 - context;
      collected.push_back({to_eigen(visited[static_cast<std::size_t>(origin)]),
                           executed[static_cast<std::size_t>(origin)], to_eigen(state)});
    }
  }
  if (config.record_states) record.states = std::move(visited);
  if (triples != nullptr) *triples = std::move(collected);
  return record;
}

std::uint64_t episode_seed(std::uint64_t master_seed, env::TaskId task, int index) {
  return derive_seed(derive_seed(master_seed, static_cast<std::uint64_t>(task)), static_cast<std::uint64_t>(index));
}

EvalSummary summarize(env::TaskId task, VariantId variant, std::span<const EvalRecord> records) {
  if (records.empty()) throw DomainError("summarize: no records");
  std::vector<double> returns;
  std::vector<double> maxima;
  for (const EvalRecord& r : records) {
    returns.push_back(r.total_return);
    maxima.push_back(r.max_reward);
  }
  const SampleStats ret = sample_stats(returns);
  const SampleStats mx = sample_stats(maxima);
  EvalSummary s;
  s.task = task;
  s.variant = variant;
  s.seeds = static_cast<int>(records.size());
  s.mean_return = ret.mean;
  s.std_return = ret.stddev;
  s.mean_max_reward = mx.mean;
  s.std_max_reward = mx.stddev;
  return s;
}

Evaluation evaluate(VariantId variant, env::TaskId task, int seeds, const Models& models,
                    const EvalConfig& config, std::uint64_t master_seed) {
  if (seeds < 1) throw DomainError("evaluate: seeds must be >= 1");
  config.validate();
  const EvalConfig inner = single_threaded(config);
  Evaluation out;
  out.records.resize(static_cast<std::size_t>(seeds));
  parallel_for(out.records.size(), config.threads, [&](std::size_t i) {
    out.records[i] = run_episode(variant, task, models, inner, episode_seed(master_seed, task, static_cast<int>(i)));
  });
  out.summary = summarize(task, variant, out.records);
  return out;
}

std::vector<SweepCell> sweep_jumpy(env::TaskId task, std::span<const int> horizons, std::span<const int> holds,
                                   int seeds, const Models& models, const EvalConfig& config,
                                   std::uint64_t master_seed) {
  if (horizons.empty() || holds.empty()) throw DomainError("sweep_jumpy: empty grid");
  std::vector<SweepCell> cells;
  for (int h : horizons) {
    for (int hold : holds) {
      EvalConfig c = config;
      c.jumpy_planner.horizon = h;
      c.jumpy_planner.hold_steps = hold;
      cells.push_back({h, hold, evaluate(VariantId::kZeroshotPlanJumpy, task, seeds, models, c, master_seed)});
    }
  }
  return cells;
}

std::vector<SweepCell> sweep_k1(env::TaskId task, std::span<const int> horizons, int seeds, const Models& models,
                                const EvalConfig& config, std::uint64_t master_seed) {
  if (horizons.empty()) throw DomainError("sweep_k1: empty horizon list");
  std::vector<SweepCell> cells;
  for (int h : horizons) {
    EvalConfig c = config;
    c.k1_planner.horizon = h;
    cells.push_back({h, c.k1_planner.hold_steps,
                     evaluate(VariantId::kZeroshotPlanK1, task, seeds, models, c, master_seed)});
  }
  return cells;
}

FinetuneReport collect_and_finetune(env::TaskId task, const skill::SkillModel& model, const EvalConfig& config,
                                    int episodes, int finetune_steps, std::uint64_t seed) {
  if (episodes < 1) throw DomainError("collect_and_finetune: episodes must be >= 1");
  if (finetune_steps < 0) throw DomainError("collect_and_finetune: finetune_steps must be >= 0");
  config.validate();
  const EvalConfig inner = single_threaded(config);
  const Models original{&model, nullptr};
  std::vector<EvalRecord> records(static_cast<std::size_t>(episodes));
  std::vector<std::vector<skill::JumpyTriple>> per_episode(static_cast<std::size_t>(episodes));
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    records[i] = run_episode(VariantId::kZeroshotPlanJumpy, task, original, inner,
                             episode_seed(seed, task, static_cast<int>(i)), &per_episode[i]);
  });

  std::vector<skill::JumpyTriple> train;
  std::vector<skill::JumpyTriple> validation;
  const int held_out = episodes >= 2 ? std::max(1, episodes / 5) : 0;
  for (int i = 0; i < episodes; ++i) {
    auto& bucket = i >= episodes - held_out ? validation : train;
    for (auto& t : per_episode[static_cast<std::size_t>(i)]) bucket.push_back(std::move(t));
  }
  if (held_out == 0) {
    // One episode: every fifth triple is held out.
    std::vector<skill::JumpyTriple> kept;
    for (std::size_t i = 0; i < train.size(); ++i) (i % 5 == 4 ? validation : kept).push_back(train[i]);
    train = std::move(kept);
  }
  if (train.empty() || validation.empty()) throw DomainError("collect_and_finetune: too little planner data");

  FinetuneReport report{skill::finetune(model, train, finetune_steps, derive_seed(seed, kFinetuneReportStream)),
                        {}, {}, train.size(), validation.size(), 0.0, 0.0};
  report.validation_error_before = skill::jumpy_prediction_error(model, validation);
  report.validation_error_after = skill::jumpy_prediction_error(report.model, validation);
  report.before = summarize(task, VariantId::kZeroshotPlanJumpy, records);
  const Models tuned{&report.model, nullptr};
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    records[i] = run_episode(VariantId::kZeroshotPlanJumpy, task, tuned, inner,
                             episode_seed(seed, task, static_cast<int>(i)));
  });
  report.after = summarize(task, VariantId::kZeroshotPlanJumpy, records);
  return report;
}

std::vector<TraceRow> record_plan_trace(const EvalRecord& record) {
  if (record.trace.empty()) {
    throw DomainError("record for " + std::string(variant_name(record.variant)) + " carries no planning trace");
  }
  return record.trace;
}

bool replay_plan_scores(const EvalRecord& record, const Models& models, const EvalConfig& config) {
  const skill::SkillModel* model = nullptr;
  const plan::PlannerConfig* planner = nullptr;
  if (record.variant == VariantId::kZeroshotPlanJumpy) {
    model = &require_model(models.jumpy, record.variant, "jumpy");
    planner = &config.jumpy_planner;
  } else if (record.variant == VariantId::kZeroshotPlanK1) {
    model = &require_model(models.k1, record.variant, "K=1");
    planner = &config.k1_planner;
  } else {
    throw DomainError("replay_plan_scores: only zero-shot planning records can be replayed");
  }
  if (record.states.size() != static_cast<std::size_t>(record.steps) + 1) {
    throw DomainError("replay_plan_scores: record has no state history");
  }
  const env::TaskSpec spec = env::task_spec(record.task);
  for (const PlanCall& call : record.plan_calls) {
    const plan::PlanResult r =
        plan::plan(to_eigen(record.states[static_cast<std::size_t>(call.step)]), *model, spec, *planner, call.seed);
    if (r.best_score != call.score) return false;
  }
  return true;
}

std::string record_to_json(const EvalRecord& record) {
  nlohmann::json j;
  j["task"] = std::string(env::task_name(record.task));
  j["variant"] = std::string(variant_name(record.variant));
  j["seed"] = record.seed;
  j["return"] = record.total_return;
  j["max_reward"] = record.max_reward;
  j["steps"] = record.steps;
  auto& trace = j["trace"] = nlohmann::json::array();
  for (const TraceRow& r : record.trace) trace.push_back({r.step, r.planned_score, r.reward});
  auto& calls = j["plan_calls"] = nlohmann::json::array();
  for (const PlanCall& c : record.plan_calls) calls.push_back({c.step, c.seed, c.score});
  auto& states = j["states"] = nlohmann::json::array();
  for (const env::EnvState& s : record.states) {
    const env::StateVector v = s.to_vector();
    states.push_back(std::vector<double>(v.begin(), v.end()));
  }
  return j.dump();
}

EvalRecord record_from_json(std::string_view line) {
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    EvalRecord r;
    r.task = env::parse_task(j.at("task").get<std::string>());
    r.variant = parse_variant(j.at("variant").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.total_return = j.at("return").get<double>();
    r.max_reward = j.at("max_reward").get<double>();
    r.steps = j.at("steps").get<int>();
    for (const auto& row : j.at("trace")) {
      r.trace.push_back({row.at(0).get<int>(), row.at(1).get<double>(), row.at(2).get<double>()});
    }
    for (const auto& c : j.at("plan_calls")) {
      r.plan_calls.push_back({c.at(0).get<int>(), c.at(1).get<std::uint64_t>(), c.at(2).get<double>()});
    }
    for (const auto& s : j.at("states")) {
      const auto v = s.get<std::vector<double>>();
      r.states.push_back(env::EnvState::from_vector(v));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw StorageError(std::string("malformed evaluation record: ") + e.what());
  }
}

std::string summary_csv_header() {
  return "task,variant,seeds,mean_return,std_return,mean_max_reward,std_max_reward";
}

std::string summary_csv_row(const EvalSummary& s) {
  return std::string(env::task_name(s.task)) + "," + std::string(variant_name(s.variant)) + "," +
         std::to_string(s.seeds) + "," + fmt(s.mean_return) + "," + fmt(s.std_return) + "," +
         fmt(s.mean_max_reward) + "," + fmt(s.std_max_reward);
}

std::string sweep_csv_header() { return "horizon,hold," + summary_csv_header(); }

std::string sweep_csv_row(const SweepCell& cell) {
  return std::to_string(cell.horizon) + "," + std::to_string(cell.hold) + "," +
         summary_csv_row(cell.evaluation.summary);
}

std::string trace_csv(std::span<const TraceRow> trace) {
  std::string out = "step,planned_score,reward\n";
  for (const TraceRow& r : trace) {
    out += std::to_string(r.step) + "," + fmt(r.planned_score) + "," + fmt(r.reward) + "\n";
  }
  return out;
}

}  // namespace jumpy::harness

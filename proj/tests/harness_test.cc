#include <cmath>

#include <gtest/gtest.h>

#include "jumpy/errors.h"
#include "jumpy/harness.h"

namespace jumpy::harness {
namespace {

const data::Dataset& dataset() {
  static const data::Dataset ds = data::generate_dataset(8, 11, true);
  return ds;
}

skill::SkillModel small_model(int context, std::uint64_t seed) {
  skill::SkillModelConfig c;
  c.context = context;
  c.feature_dim = 8;
  c.latent_dim = 4;
  c.embedder_hidden = 16;
  c.encoder_hidden = 16;
  c.action_hidden = 16;
  c.jumpy_hidden = 16;
  c.decoder_depth = 2;
  c.batch_size = 16;
  c.total_steps = 100;
  return skill::train(dataset(), c, seed).model;
}

const skill::SkillModel& jumpy_model() {
  static const skill::SkillModel m = small_model(10, 1);
  return m;
}

const skill::SkillModel& k1_model() {
  static const skill::SkillModel m = small_model(1, 2);
  return m;
}

Models both() { return {&jumpy_model(), &k1_model()}; }

EvalConfig quick_config() {
  EvalConfig c;
  c.jumpy_planner.samples = 24;
  c.k1_planner.samples = 24;
  c.k1_planner.horizon = 10;
  c.k1_planner.hold_steps = 2;
  c.episode_steps = 60;
  c.finetune.interval = 20;
  c.finetune.steps = 5;
  return c;
}

TEST(Variants, NamesAndReferences) {
  for (VariantId v : all_variants()) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("rl_hl"), DomainError);
  EXPECT_TRUE(has_reference(env::TaskId::kReachRed));
  EXPECT_TRUE(has_reference(env::TaskId::kLiftRed));
  EXPECT_TRUE(has_reference(env::TaskId::kRedHoverBlue));
  EXPECT_TRUE(has_reference(env::TaskId::kReachGreen));
  EXPECT_FALSE(has_reference(env::TaskId::kLiftGreen));
  EXPECT_TRUE(is_planning_variant(VariantId::kZeroshotPlanK1));
  EXPECT_FALSE(is_planning_variant(VariantId::kRandomHl));
}

TEST(RunEpisode, DeterministicForEveryVariant) {
  const EvalConfig c = quick_config();
  for (VariantId v : all_variants()) {
    const EvalRecord a = run_episode(v, env::TaskId::kReachRed, both(), c, 5);
    const EvalRecord b = run_episode(v, env::TaskId::kReachRed, both(), c, 5);
    EXPECT_EQ(a.total_return, b.total_return) << variant_name(v);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.steps, 60);
    EXPECT_LE(a.max_reward, 1.0);
    EXPECT_GE(a.max_reward, 0.0);
    EXPECT_LE(a.total_return, a.steps);
    EXPECT_EQ(a.states.size(), 61u);
    EXPECT_EQ(a.trace.size(), is_planning_variant(v) ? 60u : 0u);
  }
}

TEST(RunEpisode, ReturnIsSumOfRecordedRewards) {
  const EvalConfig c = quick_config();
  const EvalRecord r = run_episode(VariantId::kRandomHl, env::TaskId::kLiftRed, both(), c, 6);
  double sum = 0.0;
  double best = 0.0;
  const env::TaskSpec spec = env::task_spec(env::TaskId::kLiftRed);
  for (std::size_t t = 1; t < r.states.size(); ++t) {
    sum += env::reward(spec, r.states[t]);
    best = std::max(best, env::reward(spec, r.states[t]));
  }
  EXPECT_DOUBLE_EQ(r.total_return, sum);
  EXPECT_EQ(r.max_reward, best);
}

TEST(RunEpisode, MissingModelIsAConfigError) {
  const EvalConfig c = quick_config();
  EXPECT_THROW(run_episode(VariantId::kZeroshotPlanJumpy, env::TaskId::kReachRed, Models{}, c, 1), ConfigError);
  EXPECT_THROW(run_episode(VariantId::kZeroshotPlanK1, env::TaskId::kReachRed, Models{&jumpy_model(), nullptr}, c, 1),
               ConfigError);
  EXPECT_THROW(run_episode(VariantId::kRandomHl, env::TaskId::kReachRed, Models{}, c, 1), ConfigError);
  EXPECT_THROW(run_episode(VariantId::kBasePolicyReference, env::TaskId::kLiftGreen, Models{}, c, 1), DomainError);
}

TEST(RunEpisode, PlanCallCountFollowsHold) {
  EvalConfig c = quick_config();
  for (int hold : {1, 7, 10}) {
    c.jumpy_planner.hold_steps = hold;
    const EvalRecord r = run_episode(VariantId::kZeroshotPlanJumpy, env::TaskId::kLiftRed, both(), c, 2);
    EXPECT_EQ(r.plan_calls.size(), static_cast<std::size_t>((60 + hold - 1) / hold));
  }
}

TEST(RunEpisode, TraceBoundedByHorizonPlusOne) {
  const EvalConfig c = quick_config();
  for (env::TaskId task : {env::TaskId::kReachRed, env::TaskId::kLiftRed, env::TaskId::kBringRed}) {
    const EvalRecord r = run_episode(VariantId::kZeroshotPlanJumpy, task, both(), c, 3);
    const std::vector<TraceRow> trace = record_plan_trace(r);
    ASSERT_EQ(trace.size(), 60u);
    for (std::size_t t = 0; t < trace.size(); ++t) {
      EXPECT_EQ(trace[t].step, static_cast<int>(t));
      EXPECT_GE(trace[t].planned_score, 0.0);
      EXPECT_LE(trace[t].planned_score, 4.0);
    }
  }
  const EvalRecord random = run_episode(VariantId::kRandomHl, env::TaskId::kReachRed, both(), c, 3);
  EXPECT_THROW(record_plan_trace(random), DomainError);
}

TEST(RunEpisode, TriplesSpanOneContext) {
  const EvalConfig c = quick_config();
  std::vector<skill::JumpyTriple> triples;
  const EvalRecord r = run_episode(VariantId::kZeroshotPlanJumpy, env::TaskId::kRedHoverBlue, both(), c, 4, &triples);
  ASSERT_EQ(triples.size(), 60u - 10u + 1u);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const env::StateVector start = r.states[i].to_vector();
    const env::StateVector end = r.states[i + 10].to_vector();
    for (int d = 0; d < env::kStateDim; ++d) {
      EXPECT_EQ(triples[i].state(d), start[static_cast<std::size_t>(d)]);
      EXPECT_EQ(triples[i].target(d), end[static_cast<std::size_t>(d)]);
    }
    EXPECT_EQ(triples[i].latent.size(), 4);
  }
}

TEST(RunEpisode, ReplayReproducesPlanScores) {
  const EvalConfig c = quick_config();
  for (VariantId v : {VariantId::kZeroshotPlanJumpy, VariantId::kZeroshotPlanK1}) {
    EvalRecord r = run_episode(v, env::TaskId::kRedStackBlue, both(), c, 8);
    EXPECT_TRUE(replay_plan_scores(r, both(), c));
    r.plan_calls.front().score += 1e-12;
    EXPECT_FALSE(replay_plan_scores(r, both(), c));
  }
}

TEST(Evaluate, SummaryMatchesRecomputation) {
  const EvalConfig c = quick_config();
  const Evaluation e = evaluate(VariantId::kRandomHl, env::TaskId::kReachRed, 7, both(), c, 9);
  ASSERT_EQ(e.records.size(), 7u);
  double mean = 0.0;
  for (const EvalRecord& r : e.records) mean += r.total_return;
  mean /= 7.0;
  double ss = 0.0;
  for (const EvalRecord& r : e.records) ss += (r.total_return - mean) * (r.total_return - mean);
  EXPECT_NEAR(e.summary.mean_return, mean, 1e-9);
  EXPECT_NEAR(e.summary.std_return, std::sqrt(ss / 6.0), 1e-9);
  EXPECT_EQ(e.summary.seeds, 7);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(e.records[static_cast<std::size_t>(i)].seed, episode_seed(9, env::TaskId::kReachRed, i));

  const Evaluation one = evaluate(VariantId::kRandomHl, env::TaskId::kReachRed, 1, both(), c, 9);
  EXPECT_EQ(one.summary.std_return, 0.0);
  EXPECT_EQ(one.summary.std_max_reward, 0.0);
  EXPECT_EQ(one.records[0].total_return, e.records[0].total_return);
  EXPECT_THROW(evaluate(VariantId::kRandomHl, env::TaskId::kReachRed, 0, both(), c, 9), DomainError);
}

TEST(Evaluate, IndependentOfThreadCount) {
  EvalConfig c = quick_config();
  const Evaluation one = evaluate(VariantId::kZeroshotPlanJumpy, env::TaskId::kLiftRed, 3, both(), c, 4);
  c.threads = 3;
  const Evaluation three = evaluate(VariantId::kZeroshotPlanJumpy, env::TaskId::kLiftRed, 3, both(), c, 4);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(one.records[i].total_return, three.records[i].total_return);
}

TEST(Sweep, GridDimensionsAndCellIndependence) {
  EvalConfig c = quick_config();
  c.episode_steps = 20;
  const int horizons[] = {1, 2};
  const int holds[] = {1, 5, 20};
  const std::vector<SweepCell> grid = sweep_jumpy(env::TaskId::kLiftRed, horizons, holds, 2, both(), c, 3);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid[4].horizon, 2);
  EXPECT_EQ(grid[4].hold, 5);
  const int one_h[] = {2};
  const int one_hold[] = {5};
  const std::vector<SweepCell> sub = sweep_jumpy(env::TaskId::kLiftRed, one_h, one_hold, 2, both(), c, 3);
  EXPECT_EQ(sub[0].evaluation.summary.mean_return, grid[4].evaluation.summary.mean_return);
  EXPECT_EQ(summary_csv_row(sub[0].evaluation.summary), summary_csv_row(grid[4].evaluation.summary));

  const std::vector<SweepCell> k1 = sweep_k1(env::TaskId::kReachRed, horizons, 2, both(), c, 3);
  ASSERT_EQ(k1.size(), 2u);
  EXPECT_EQ(k1[1].horizon, 2);
  EXPECT_THROW(sweep_k1(env::TaskId::kReachRed, std::span<const int>{}, 2, both(), c, 3), DomainError);
  EXPECT_EQ(std::size(kDefaultJumpyHorizons) * std::size(kDefaultHolds), 24u);
  EXPECT_EQ(std::size(kDefaultK1Horizons), 7u);
}

TEST(Finetune, ZeroStepsLeavesEverythingUnchanged) {
  const EvalConfig c = quick_config();
  const FinetuneReport r = collect_and_finetune(env::TaskId::kRedHoverBlue, jumpy_model(), c, 3, 0, 5);
  EXPECT_TRUE(r.model.params.bitwise_equal(jumpy_model().params));
  EXPECT_EQ(r.before.mean_return, r.after.mean_return);
  EXPECT_EQ(r.validation_error_before, r.validation_error_after);
  EXPECT_EQ(r.train_triples + r.validation_triples, 3u * 51u);
  EXPECT_EQ(r.validation_triples, 51u);
}

TEST(Finetune, ImprovesHeldOutJumpyError) {
  const EvalConfig c = quick_config();
  const FinetuneReport r = collect_and_finetune(env::TaskId::kRedHoverBlue, jumpy_model(), c, 5, 100, 6);
  EXPECT_LE(r.validation_error_after, r.validation_error_before);
  EXPECT_THROW(collect_and_finetune(env::TaskId::kRedHoverBlue, jumpy_model(), c, 0, 10, 6), DomainError);
}

TEST(PlanFinetune, RunsAndStaysInRange) {
  const EvalConfig c = quick_config();
  const EvalRecord r = run_episode(VariantId::kPlanFinetune, env::TaskId::kRedHoverBlue, both(), c, 7);
  EXPECT_EQ(r.trace.size(), 60u);
  EXPECT_LE(r.max_reward, 1.0);
}

TEST(Emission, JsonRoundTripAndCsv) {
  const EvalConfig c = quick_config();
  const EvalRecord r = run_episode(VariantId::kZeroshotPlanJumpy, env::TaskId::kReachRed, both(), c, 10);
  const EvalRecord back = record_from_json(record_to_json(r));
  EXPECT_EQ(back.total_return, r.total_return);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.states, r.states);
  ASSERT_EQ(back.plan_calls.size(), r.plan_calls.size());
  EXPECT_EQ(back.plan_calls.back().score, r.plan_calls.back().score);
  EXPECT_EQ(record_to_json(back), record_to_json(r));
  EXPECT_THROW(record_from_json("{\"task\": 3}"), StorageError);
  EXPECT_EQ(summary_csv_header(), "task,variant,seeds,mean_return,std_return,mean_max_reward,std_max_reward");
  const std::string csv = trace_csv(r.trace);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 61);
}

}  // namespace
}  // namespace jumpy::harness

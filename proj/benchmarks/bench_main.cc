#include <benchmark/benchmark.h>

#include "jumpy/dataset.h"
#include "jumpy/env.h"
#include "jumpy/planner.h"
#include "jumpy/skill_model.h"

namespace {

using namespace jumpy;

const data::Dataset& dataset() {
  static const data::Dataset ds = data::generate_dataset(20, 1, true);
  return ds;
}

const skill::SkillModel& model() {
  static const skill::SkillModel m = [] {
    const skill::SkillModelConfig c;
    return skill::make_skill_model(c, data::compute_delta_stats(dataset(), c.context, 2, 5000), 3);
  }();
  return m;
}

nn::RealVector state_of(const env::EnvState& s) {
  const env::StateVector v = s.to_vector();
  return Eigen::Map<const nn::RealVector>(v.data(), env::kStateDim);
}

void BM_EnvStep(benchmark::State& st) {
  env::EnvState s = env::reset(1);
  RandomStream noise(2);
  const env::EnvAction a{0.3, -0.2, -0.5};
  for (auto _ : st) {
    s = env::step(s, a, &noise);
    if (s.gripper_y < 0.05) s = env::reset(3);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_EnvStep);

void BM_DecodeJumpyBatch(benchmark::State& st) {
  const auto n = static_cast<Eigen::Index>(st.range(0));
  const nn::RealMatrix states = state_of(env::reset(4)).replicate(1, n);
  const nn::RealMatrix features = skill::embed_states(model(), states);
  const nn::RealMatrix latents = nn::RealMatrix::Random(model().config.latent_dim, n);
  for (auto _ : st) benchmark::DoNotOptimize(skill::decode_jumpy_batch(model(), states, features, latents));
  st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_DecodeJumpyBatch)->Arg(1)->Arg(16)->Arg(128);

void BM_Plan(benchmark::State& st) {
  plan::PlannerConfig c;
  c.samples = static_cast<int>(st.range(0));
  const nn::RealVector s = state_of(env::reset(5));
  const env::TaskSpec task = env::task_spec(env::TaskId::kLiftRed);
  std::uint64_t seed = 0;
  for (auto _ : st) benchmark::DoNotOptimize(plan::plan(s, model(), task, c, ++seed));
}
BENCHMARK(BM_Plan)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TrainingStepLoss(benchmark::State& st) {
  RandomStream rng(6);
  std::vector<data::Snippet> snippets;
  for (int i = 0; i < model().config.batch_size; ++i) {
    snippets.push_back(data::sample_snippet(dataset(), rng, model().config.context));
  }
  const skill::SnippetBatch batch = skill::make_batch(snippets);
  for (auto _ : st) benchmark::DoNotOptimize(skill::skill_loss(model(), batch, rng, true));
}
BENCHMARK(BM_TrainingStepLoss)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

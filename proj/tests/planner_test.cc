#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "jumpy/errors.h"
#include "jumpy/planner.h"

namespace jumpy::plan {
namespace {

const data::Dataset& dataset() {
  static const data::Dataset ds = data::generate_dataset(6, 3, true);
  return ds;
}

skill::SkillModel small_model(std::uint64_t seed) {
  skill::SkillModelConfig c;
  c.context = 10;
  c.feature_dim = 8;
  c.latent_dim = 4;
  c.embedder_hidden = 16;
  c.encoder_hidden = 16;
  c.action_hidden = 16;
  c.jumpy_hidden = 16;
  c.decoder_depth = 2;
  return skill::make_skill_model(c, data::compute_delta_stats(dataset(), 10, 1, 2000), seed);
}

RealVector as_vector(const env::EnvState& s) {
  const env::StateVector v = s.to_vector();
  return Eigen::Map<const RealVector>(v.data(), env::kStateDim);
}

// Reach-red states with reward exactly 1 and exactly 0.
env::EnvState rewarding() {
  env::EnvState s = env::reset(1);
  s.gripper_x = s.object(env::Color::kRed).x;
  s.gripper_y = s.object(env::Color::kRed).y;
  return s;
}

env::EnvState unrewarding() {
  env::EnvState s = rewarding();
  s.gripper_y = 1.0;
  s.gripper_x = s.gripper_x > 0 ? -1.0 : 1.0;
  return s;
}

RealMatrix columns(std::initializer_list<env::EnvState> states) {
  RealMatrix m(env::kStateDim, static_cast<Eigen::Index>(states.size()));
  Eigen::Index c = 0;
  for (const env::EnvState& s : states) m.col(c++) = as_vector(s);
  return m;
}

TEST(Score, Examples) {
  const env::TaskSpec task = env::task_spec(env::TaskId::kReachRed);
  ASSERT_EQ(env::reward(task, rewarding()), 1.0);
  ASSERT_EQ(env::reward(task, unrewarding()), 0.0);
  const env::EnvState one = rewarding();
  const env::EnvState zero = unrewarding();
  EXPECT_EQ(score(columns({one, one, one, one}), task, 1.0), 4.0);
  EXPECT_EQ(score(columns({one, zero, zero, zero}), task, 0.9), 1.0);
  EXPECT_NEAR(score(columns({zero, one, one}), task, 0.9), 1.71, 1e-15);
  const std::vector<env::EnvState> seq{zero, one, one};
  EXPECT_NEAR(score(seq, task, 0.9), 1.71, 1e-15);
}

TEST(Score, UndiscountedEqualsPlainSum) {
  RandomStream rng(4);
  for (env::TaskId id : env::all_tasks()) {
    const env::TaskSpec task = env::task_spec(id);
    for (int trial = 0; trial < 20; ++trial) {
      RealMatrix traj(env::kStateDim, 4);
      double sum = 0.0;
      for (int h = 0; h < 4; ++h) {
        env::EnvState s = env::reset(rng.next_u64());
        s.gripper_x = rng.uniform(-1, 1);
        s.gripper_y = rng.uniform(0, 1);
        traj.col(h) = as_vector(s);
        sum += env::reward(task, s);
      }
      EXPECT_EQ(score(traj, task, 1.0), sum);
    }
  }
}

TEST(Rollout, EmptyAndZeroDecoder) {
  skill::SkillModel m = small_model(1);
  const RealVector s = as_vector(env::reset(3));
  const RealMatrix only = rollout_imaginary(s, RealMatrix(4, 0), m);
  ASSERT_EQ(only.cols(), 1);
  EXPECT_EQ(RealVector(only.col(0)), s);
  const auto& last = m.jumpy_decoder.params.back();
  m.params[last.first].setZero();
  m.params[last.second].setZero();
  const RealMatrix traj = rollout_imaginary(s, RealMatrix::Random(4, 3), m);
  ASSERT_EQ(traj.cols(), 4);
  for (int h = 0; h < 4; ++h) EXPECT_EQ(RealVector(traj.col(h)), s);
  EXPECT_THROW(rollout_imaginary(s, RealMatrix::Zero(3, 2), m), ShapeError);
}

TEST(UpdateProposal, IdenticalAndSymmetricElites) {
  RealMatrix plan(2, 3);
  plan << 1, 2, 3, 4, 5, 6;
  const std::vector<RealMatrix> same(5, plan);
  const Proposal p = update_proposal(same, 0.05);
  ASSERT_EQ(p.steps.size(), 3u);
  for (int h = 0; h < 3; ++h) {
    EXPECT_TRUE(p.steps[static_cast<std::size_t>(h)].mean.isApprox(plan.col(h)));
    EXPECT_TRUE(p.steps[static_cast<std::size_t>(h)].stddev().isApprox(RealVector::Constant(2, 0.05)));
  }
  RealMatrix plus = RealMatrix::Zero(2, 1);
  plus << 0.7, 0.01;
  const std::vector<RealMatrix> pair{plus, RealMatrix(-plus)};
  const Proposal q = update_proposal(pair, 0.05);
  EXPECT_NEAR(q.steps[0].mean.norm(), 0.0, 1e-15);
  EXPECT_NEAR(q.steps[0].stddev()(0), 0.7, 1e-12);
  EXPECT_NEAR(q.steps[0].stddev()(1), 0.05, 1e-15);
  EXPECT_THROW(update_proposal(std::vector<RealMatrix>{}, 0.05), DomainError);
  EXPECT_THROW(update_proposal(std::vector<RealMatrix>{plan, plus}, 0.05), ShapeError);
}

TEST(UpdateProposal, MatchesMomentOracle) {
  RandomStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int count = 1 + static_cast<int>(rng.index(30));
    std::vector<RealMatrix> elites;
    for (int e = 0; e < count; ++e) {
      RealMatrix m(3, 2);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.gaussian();
      elites.push_back(m);
    }
    const Proposal p = update_proposal(elites, 0.05);
    for (int h = 0; h < 2; ++h) {
      for (int d = 0; d < 3; ++d) {
        long double sum = 0.0L;
        for (const RealMatrix& e : elites) sum += e(d, h);
        const long double mean = sum / count;
        long double sq = 0.0L;
        for (const RealMatrix& e : elites) sq += (e(d, h) - mean) * (e(d, h) - mean);
        const double stddev = std::max(static_cast<double>(std::sqrt(sq / count)), 0.05);
        const auto& g = p.steps[static_cast<std::size_t>(h)];
        EXPECT_NEAR(g.mean(d), static_cast<double>(mean), 1e-12);
        EXPECT_NEAR(g.stddev()(d), stddev, 1e-12);
      }
    }
  }
}

TEST(Config, Validation) {
  PlannerConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.elite_count(), 100);
  c.samples = 7;
  c.elite_fraction = 0.1;
  EXPECT_EQ(c.elite_count(), 1);
  for (auto mutate : std::vector<void (*)(PlannerConfig&)>{
           [](PlannerConfig& x) { x.iterations = 0; }, [](PlannerConfig& x) { x.samples = 0; },
           [](PlannerConfig& x) { x.horizon = 0; }, [](PlannerConfig& x) { x.elite_fraction = 0.0; },
           [](PlannerConfig& x) { x.elite_fraction = 1.5; }, [](PlannerConfig& x) { x.discount = 1.1; },
           [](PlannerConfig& x) { x.hold_steps = 0; }, [](PlannerConfig& x) { x.init_std = 0.0; }}) {
    PlannerConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), DomainError);
  }
}

TEST(Plan, ShapesAndInvariants) {
  const skill::SkillModel m = small_model(2);
  PlannerConfig c;
  c.samples = 50;
  c.horizon = 3;
  const RealVector s = as_vector(env::reset(4));
  const PlanResult r = plan(s, m, env::task_spec(env::TaskId::kLiftRed), c, 9);
  ASSERT_EQ(r.plans.size(), 50u);
  ASSERT_EQ(r.trajectories.size(), 50u);
  ASSERT_EQ(r.scores.size(), 50);
  for (int n = 0; n < 50; ++n) {
    EXPECT_EQ(r.plans[static_cast<std::size_t>(n)].rows(), 4);
    EXPECT_EQ(r.plans[static_cast<std::size_t>(n)].cols(), 3);
    EXPECT_EQ(r.trajectories[static_cast<std::size_t>(n)].cols(), 4);
    EXPECT_EQ(RealVector(r.trajectories[static_cast<std::size_t>(n)].col(0)), s);
  }
  Eigen::Index arg = 0;
  r.scores.maxCoeff(&arg);
  EXPECT_EQ(r.best_index, static_cast<int>(arg));
  EXPECT_EQ(r.chosen_z, RealVector(r.plans[static_cast<std::size_t>(r.best_index)].col(0)));
  EXPECT_EQ(r.elites.size(), 5u);
}

TEST(Plan, SingleSample) {
  const skill::SkillModel m = small_model(3);
  PlannerConfig c;
  c.samples = 1;
  const PlanResult r = plan(as_vector(env::reset(5)), m, env::task_spec(env::TaskId::kReachRed), c, 1);
  EXPECT_EQ(r.best_index, 0);
  EXPECT_EQ(r.chosen_z, RealVector(r.plans[0].col(0)));
}

// Exhaustive re-scoring of every sampled plan, one rollout at a time.
TEST(Plan, RescoringOracle) {
  RandomStream rng(10);
  for (int call = 0; call < 25; ++call) {
    const skill::SkillModel m = small_model(100 + static_cast<std::uint64_t>(call % 5));
    PlannerConfig c;
    c.samples = 1 + static_cast<int>(rng.index(64));
    c.horizon = 1 + static_cast<int>(rng.index(4));
    c.iterations = 1 + static_cast<int>(rng.index(3));
    c.discount = call % 2 == 0 ? 1.0 : 0.9;
    const env::TaskSpec task = env::task_spec(env::all_tasks()[rng.index(env::kTaskCount)]);
    const RealVector s = as_vector(env::reset(rng.next_u64()));
    const PlanResult r = plan(s, m, task, c, rng.next_u64());
    RealVector rescored(c.samples);
    for (int n = 0; n < c.samples; ++n) {
      const RealMatrix traj = rollout_imaginary(s, r.plans[static_cast<std::size_t>(n)], m);
      ASSERT_EQ(std::memcmp(traj.data(), r.trajectories[static_cast<std::size_t>(n)].data(),
                            sizeof(double) * static_cast<std::size_t>(traj.size())),
                0);
      rescored(n) = score(traj, task, c.discount);
    }
    EXPECT_EQ(rescored, r.scores);
    Eigen::Index arg = 0;
    rescored.maxCoeff(&arg);
    EXPECT_EQ(r.best_index, static_cast<int>(arg));
  }
}

TEST(Plan, ElitesDominateDiscarded) {
  const skill::SkillModel m = small_model(4);
  PlannerConfig c;
  c.samples = 40;
  c.iterations = 3;
  c.elite_fraction = 0.25;
  const PlanResult r = plan(as_vector(env::reset(6)), m, env::task_spec(env::TaskId::kReachRed), c, 2);
  ASSERT_EQ(r.elites.size(), 10u);
  std::vector<bool> is_elite(40, false);
  double worst_elite = r.scores(r.elites.front());
  for (int e : r.elites) {
    is_elite[static_cast<std::size_t>(e)] = true;
    worst_elite = std::min(worst_elite, r.scores(e));
  }
  for (int n = 0; n < 40; ++n) {
    if (!is_elite[static_cast<std::size_t>(n)]) EXPECT_LE(r.scores(n), worst_elite);
  }
}

TEST(Plan, IndependentOfThreadCount) {
  const skill::SkillModel m = small_model(5);
  PlannerConfig c;
  c.samples = 300;
  const RealVector s = as_vector(env::reset(7));
  const PlanResult one = plan(s, m, env::task_spec(env::TaskId::kLiftRed), c, 3);
  c.threads = 3;
  const PlanResult three = plan(s, m, env::task_spec(env::TaskId::kLiftRed), c, 3);
  EXPECT_EQ(one.scores, three.scores);
  EXPECT_EQ(one.best_index, three.best_index);
  EXPECT_EQ(one.chosen_z, three.chosen_z);
}

TEST(Plan, NonFiniteRolloutNamesSample) {
  skill::SkillModel m = small_model(6);
  m.params[m.jumpy_decoder.params.back().second](0) = std::numeric_limits<double>::quiet_NaN();
  PlannerConfig c;
  c.samples = 4;
  try {
    plan(as_vector(env::reset(8)), m, env::task_spec(env::TaskId::kReachRed), c, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 0"), std::string::npos);
  }
}

TEST(Act, HoldSemantics) {
  const skill::SkillModel m = small_model(7);
  const env::TaskSpec task = env::task_spec(env::TaskId::kReachRed);
  for (int hold : {1, 10, 7}) {
    PlannerConfig c;
    c.samples = 8;
    c.hold_steps = hold;
    PlanCache cache;
    env::EnvState s = env::reset(9);
    int calls = 0;
    for (int t = 0; t < 400; ++t) {
      const ActResult r = act(s, m, task, c, static_cast<std::uint64_t>(t), cache);
      if (r.replanned) {
        ++calls;
        EXPECT_EQ(t % hold, 0);
      }
      EXPECT_LE(std::abs(r.action.dx), 1.0);
      EXPECT_LE(std::abs(r.action.dy), 1.0);
      EXPECT_LE(std::abs(r.action.dap), 1.0);
      s = env::step(s, r.action, nullptr);
    }
    EXPECT_EQ(calls, (400 + hold - 1) / hold);
  }
}

TEST(Act, DeterministicForEqualSeeds) {
  const skill::SkillModel m = small_model(8);
  PlannerConfig c;
  c.samples = 16;
  PlanCache a;
  PlanCache b;
  const env::EnvState s = env::reset(10);
  const env::TaskSpec task = env::task_spec(env::TaskId::kLiftRed);
  const ActResult ra = act(s, m, task, c, 77, a);
  const ActResult rb = act(s, m, task, c, 77, b);
  EXPECT_EQ(ra.action.to_vector(), rb.action.to_vector());
  EXPECT_EQ(ra.latent, rb.latent);
  const RealVector expected = skill::decode_action(m, as_vector(s), ra.latent).cwiseMax(-1.0).cwiseMin(1.0);
  EXPECT_EQ(ra.action.to_vector(), (env::ActionVector{expected(0), expected(1), expected(2)}));
}

}  // namespace
}  // namespace jumpy::plan

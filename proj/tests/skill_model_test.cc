#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "jumpy/errors.h"
#include "jumpy/nn/gaussian.h"
#include "jumpy/nn/grad_check.h"
#include "jumpy/skill_model.h"

namespace jumpy::skill {
namespace {

SkillModelConfig tiny_config(int context = 4) {
  SkillModelConfig c;
  c.context = context;
  c.feature_dim = 6;
  c.latent_dim = 3;
  c.embedder_hidden = 10;
  c.encoder_hidden = 10;
  c.action_hidden = 10;
  c.jumpy_hidden = 10;
  c.decoder_depth = 2;
  c.batch_size = 8;
  c.total_steps = 200;
  c.log_interval = 50;
  return c;
}

const data::Dataset& dataset() {
  static const data::Dataset ds = data::generate_dataset(12, 31, true);
  return ds;
}

SkillModel tiny_model(std::uint64_t seed = 1, int context = 4) {
  const SkillModelConfig c = tiny_config(context);
  return make_skill_model(c, data::compute_delta_stats(dataset(), c.context, seed, 5000), seed);
}

RealMatrix noise_for(const SkillModel& m, int batch, std::uint64_t seed) {
  RandomStream rng(seed);
  RealMatrix n(m.config.latent_dim, batch);
  for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] = rng.gaussian();
  return n;
}

SnippetBatch random_batch(int size, int context, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<data::Snippet> s;
  for (int i = 0; i < size; ++i) s.push_back(data::sample_snippet(dataset(), rng, context));
  return make_batch(s);
}

TEST(SkillModel, ConfigValidation) {
  SkillModelConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.context = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = tiny_config();
  c.beta_kl = -1.0;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_EQ(parse_aggregation("mean"), Aggregation::kMean);
  EXPECT_THROW(parse_aggregation("sum"), DomainError);
}

TEST(SkillModel, NetworkShapes) {
  const SkillModel m = tiny_model();
  EXPECT_EQ(m.embedder.in_dim(), 12);
  EXPECT_EQ(m.embedder.out_dim(), 6);
  EXPECT_EQ(m.encoder.in_dim(), 5 * 6);
  EXPECT_EQ(m.encoder.out_dim(), 6);
  EXPECT_EQ(m.action_decoder.in_dim(), 9);
  EXPECT_EQ(m.action_decoder.out_dim(), 3);
  EXPECT_EQ(m.jumpy_decoder.in_dim(), 9);
  EXPECT_EQ(m.jumpy_decoder.out_dim(), 12);
  EXPECT_EQ(m.delta_scale.scale.size(), 12);
}

TEST(SkillModel, EmbedderIsSharedAndPure) {
  const SkillModel m = tiny_model();
  const data::Snippet s = data::snippet_at(dataset(), 0, 0, 4);
  const RealMatrix all = embed_states(m, s.states);
  for (int k = 0; k <= 4; ++k) {
    const RealVector one = embed_state(m, s.states.col(k));
    EXPECT_EQ(std::memcmp(one.data(), all.col(k).data(), sizeof(double) * 6), 0);
  }
  EXPECT_EQ(embed_state(m, s.states.col(0)), embed_state(m, s.states.col(0)));
  EXPECT_THROW(embed_states(m, RealMatrix::Zero(11, 1)), ShapeError);
}

TEST(SkillModel, EncodeShapeClampAndOrderSensitivity) {
  SkillModel m = tiny_model();
  RandomStream rng(2);
  for (int i = 0; i < 20; ++i) {
    const data::Snippet s = data::sample_snippet(dataset(), rng, 4);
    const nn::DiagGaussian q = encode(m, s.states);
    EXPECT_EQ(q.dim(), 3);
    RealMatrix reversed = s.states.rowwise().reverse();
    if (reversed != s.states) {
      EXPECT_NE(encode(m, reversed).mean, q.mean);
    }
  }
  // Push the log_std head far out so both clamp bounds engage.
  const nn::ParamId head_bias = m.encoder.params.back().second;
  m.params[head_bias].bottomRows(3) << 100.0, -100.0, 0.0;
  const nn::DiagGaussian q = encode(m, data::snippet_at(dataset(), 1, 5, 4).states);
  EXPECT_EQ(q.log_std(0), kLogStdMax);
  EXPECT_EQ(q.log_std(1), kLogStdMin);
  EXPECT_THROW(encode(m, RealMatrix::Zero(12, 4)), ShapeError);
}

TEST(SkillModel, DecodersShapeAndPurity) {
  const SkillModel m = tiny_model();
  const RealVector s = data::snippet_at(dataset(), 2, 10, 4).states.col(0);
  const RealVector z = RealVector::Constant(3, 0.3);
  const RealVector a = decode_action(m, s, z);
  EXPECT_EQ(a.size(), 3);
  EXPECT_EQ(a, decode_action(m, s, z));
  EXPECT_THROW(decode_action(m, s, RealVector::Zero(2)), ShapeError);
  const RealVector next = decode_jumpy(m, s, z);
  EXPECT_EQ(next.size(), 12);
  EXPECT_TRUE(((next - s).array().abs() <= m.delta_scale.scale.array()).all());
}

TEST(SkillModel, ZeroJumpyOutputPredictsNoChange) {
  SkillModel m = tiny_model();
  const auto& last = m.jumpy_decoder.params.back();
  m.params[last.first].setZero();
  m.params[last.second].setZero();
  const RealVector s = data::snippet_at(dataset(), 3, 0, 4).states.col(0);
  EXPECT_EQ(decode_jumpy(m, s, RealVector::Constant(3, -1.0)), s);
}

TEST(SkillModel, ChainedDecodingStaysFinite) {
  const SkillModel m = tiny_model();
  RandomStream rng(3);
  RealVector s = data::snippet_at(dataset(), 0, 0, 4).states.col(0);
  for (int h = 0; h < 200; ++h) {
    RealVector z(3);
    for (int i = 0; i < 3; ++i) z(i) = 3.0 * rng.gaussian();
    s = decode_jumpy(m, s, z);
    ASSERT_TRUE(s.allFinite());
  }
}

TEST(SkillLoss, DuplicateSnippetsWithSharedNoiseGiveEqualLosses) {
  const SkillModel m = tiny_model();
  const data::Snippet s = data::snippet_at(dataset(), 4, 50, 4);
  const std::vector<data::Snippet> one{s};
  const std::vector<data::Snippet> two{s, s};
  const RealMatrix n1 = noise_for(m, 1, 5);
  RealMatrix n2(3, 2);
  n2 << n1, n1;
  const LossBreakdown a = skill_loss(m, make_batch(one), n1, false).breakdown;
  const LossBreakdown b = skill_loss(m, make_batch(two), n2, false).breakdown;
  EXPECT_NEAR(a.total, b.total, 1e-12);
  EXPECT_NEAR(a.kl, b.kl, 1e-12);
}

TEST(SkillLoss, DiffersFromGaussianNllByAConstant) {
  SkillModel m = tiny_model(7);
  m.config.beta_a = 1.0;
  m.config.beta_s = 1.0;
  m.config.beta_kl = 1.0;
  const int k = m.config.context;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const SnippetBatch batch = random_batch(1, k, 100 + trial);
    const RealMatrix noise = noise_for(m, 1, 200 + trial);
    const double total = skill_loss(m, batch, noise, false).breakdown.total;

    const RealMatrix states = batch.states;
    const nn::DiagGaussian q = encode(m, states);
    const RealVector z = q.mean + q.stddev().cwiseProduct(noise.col(0));
    double nll = 0.0;
    for (int j = 0; j < k; ++j) {
      nn::DiagGaussian like{decode_action(m, states.col(j), z), RealVector::Zero(3)};
      nll -= nn::gaussian_log_prob(like, batch.actions.col(j));
    }
    const RealVector predicted =
        (decode_jumpy(m, states.col(0), z) - states.col(0)).cwiseQuotient(m.delta_scale.scale);
    nn::DiagGaussian state_like{predicted, RealVector::Zero(12)};
    nll -= nn::gaussian_log_prob(state_like,
                                 data::normalize_delta(states.col(k) - states.col(0), m.delta_scale));
    const double assembled = nn::gaussian_kl_to_standard(q) + nll;
    const double constant = 0.5 * (3 * k + 12) * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(total - assembled, -constant, 1e-9);
  }
}

TEST(SkillLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SkillModel m = tiny_model(seed, 3);
    const SnippetBatch batch = random_batch(4, 3, seed);
    const RealMatrix noise = noise_for(m, 4, seed);
    const nn::LossFunction loss = [&](const nn::ParameterStore&, nn::Gradients* grads) {
      LossResult r = skill_loss(m, batch, noise, grads != nullptr);
      if (grads != nullptr) *grads = std::move(r.grads);
      return r.breakdown.total;
    };
    const nn::ValueFunction value = [&](const nn::ParameterStore&) { return skill_loss_extended(m, batch, noise); };
    const nn::GradCheckResult r = nn::grad_check(m.params, loss, value, 200, 1e-6, seed);
    EXPECT_LE(r.max_relative_error, 1e-5) << m.params.name(r.worst_param);
  }
}

TEST(SkillLoss, EmbedderGradientCollectsEveryTimestep) {
  // Only the encoder path touches timesteps 1..K; with the decoders' losses
  // switched off the embedder gradient must still be non-zero and correct.
  SkillModel m = tiny_model(21, 3);
  m.config.beta_a = 0.0;
  m.config.beta_s = 0.0;
  const SnippetBatch batch = random_batch(3, 3, 22);
  const RealMatrix noise = noise_for(m, 3, 23);
  const LossResult r = skill_loss(m, batch, noise);
  const nn::ParamId w = m.embedder.params.front().first;
  EXPECT_GT(r.grads[w].norm(), 0.0);
  const nn::LossFunction loss = [&](const nn::ParameterStore&, nn::Gradients* grads) {
    LossResult x = skill_loss(m, batch, noise, grads != nullptr);
    if (grads != nullptr) *grads = std::move(x.grads);
    return x.breakdown.total;
  };
  const nn::ValueFunction value = [&](const nn::ParameterStore&) { return skill_loss_extended(m, batch, noise); };
  EXPECT_LE(nn::grad_check(m.params, loss, value, 100, 1e-6, 24).max_relative_error, 1e-5);
}

TEST(SkillLoss, RejectsMismatchedInputs) {
  const SkillModel m = tiny_model();
  const SnippetBatch batch = random_batch(2, 5, 30);
  EXPECT_THROW(skill_loss(m, batch, noise_for(m, 2, 1)), ShapeError);
  const SnippetBatch ok = random_batch(2, 4, 30);
  EXPECT_THROW(skill_loss(m, ok, noise_for(m, 3, 1)), ShapeError);
  EXPECT_THROW(make_batch(std::vector<data::Snippet>{}), DomainError);
}

TEST(Training, DeterministicWithExpectedLogRows) {
  const SkillModelConfig c = tiny_config();
  const TrainResult a = train(dataset(), c, 40);
  const TrainResult b = train(dataset(), c, 40);
  EXPECT_TRUE(a.model.params.bitwise_equal(b.model.params));
  ASSERT_EQ(a.log.size(), 4u);
  EXPECT_EQ(a.log.back().step, 200);
  for (const TrainLogRow& row : a.log) {
    EXPECT_NEAR(row.mean.total, c.beta_kl * row.mean.kl + c.beta_a * row.mean.action + c.beta_s * row.mean.state,
                1e-9);
  }
}

TEST(Training, KlOnlyObjectiveCollapsesToThePrior) {
  SkillModelConfig c = tiny_config();
  c.beta_a = 0.0;
  c.beta_s = 0.0;
  c.total_steps = 1500;
  c.learning_rate = 3e-3;
  const TrainResult r = train(dataset(), c, 41);
  RandomStream rng(42);
  double kl = 0.0;
  for (int i = 0; i < 50; ++i) {
    kl += nn::gaussian_kl_to_standard(encode(r.model, data::sample_snippet(dataset(), rng, 4).states));
  }
  EXPECT_LT(kl / 50, 0.02);
}

TEST(Training, OneStepModelUsesTheSamePath) {
  SkillModelConfig c = tiny_config(1);
  c.total_steps = 50;
  const TrainResult r = train(dataset(), c, 43);
  EXPECT_EQ(r.model.config.context, 1);
  EXPECT_EQ(r.model.encoder.in_dim(), 2 * 6);
  const data::Snippet s = data::snippet_at(dataset(), 0, 7, 1);
  EXPECT_TRUE(chained_prediction(r.model, data::snippet_at(dataset(), 0, 7, 4).states).allFinite());
  EXPECT_EQ(encode(r.model, s.states).dim(), 3);
}

std::vector<JumpyTriple> triples_from(const SkillModel& m, int count, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<JumpyTriple> out;
  for (int i = 0; i < count; ++i) {
    const data::Snippet s = data::sample_snippet(dataset(), rng, m.config.context);
    out.push_back({s.states.col(0), encode(m, s.states).mean, s.states.col(m.config.context)});
  }
  return out;
}

TEST(Finetune, OnlyJumpyDecoderChanges) {
  const SkillModel m = tiny_model(50);
  const std::vector<JumpyTriple> triples = triples_from(m, 64, 51);
  EXPECT_TRUE(finetune(m, triples, 0, 52).params.bitwise_equal(m.params));
  const SkillModel tuned = finetune(m, triples, 100, 52);
  const std::vector<nn::ParamId> jumpy = m.jumpy_parameter_ids();
  bool changed = false;
  for (nn::ParamId id = 0; id < m.params.size(); ++id) {
    const bool in_jumpy = std::find(jumpy.begin(), jumpy.end(), id) != jumpy.end();
    const bool same = std::memcmp(m.params[id].data(), tuned.params[id].data(),
                                  sizeof(double) * m.params[id].size()) == 0;
    if (!in_jumpy) EXPECT_TRUE(same) << m.params.name(id);
    if (in_jumpy && !same) changed = true;
  }
  EXPECT_TRUE(changed);
  EXPECT_LT(jumpy_prediction_error(tuned, triples), jumpy_prediction_error(m, triples));
  EXPECT_THROW(finetune(m, std::vector<JumpyTriple>{}, 10, 1), DomainError);
}

TEST(Persistence, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "jumpy_skill_persist";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  SkillModel m = tiny_model(60);
  m.config.aggregation = Aggregation::kConcat;
  save_skill_model(dir / "m.json", m);
  const SkillModel back = load_skill_model(dir / "m.json");
  EXPECT_TRUE(back.params.bitwise_equal(m.params));
  EXPECT_EQ(back.config.context, m.config.context);
  EXPECT_EQ(back.delta_scale.scale, m.delta_scale.scale);
  const RealVector s = data::snippet_at(dataset(), 0, 0, 4).states.col(0);
  EXPECT_EQ(decode_jumpy(back, s, RealVector::Ones(3)), decode_jumpy(m, s, RealVector::Ones(3)));
}

TEST(MeanAggregation, ShapesAndGradients) {
  SkillModelConfig c = tiny_config(3);
  c.aggregation = Aggregation::kMean;
  SkillModel m = make_skill_model(c, data::compute_delta_stats(dataset(), 3, 1, 2000), 70);
  EXPECT_EQ(m.encoder.in_dim(), 6);
  const SnippetBatch batch = random_batch(3, 3, 71);
  const RealMatrix noise = noise_for(m, 3, 72);
  const nn::LossFunction loss = [&](const nn::ParameterStore&, nn::Gradients* grads) {
    LossResult x = skill_loss(m, batch, noise, grads != nullptr);
    if (grads != nullptr) *grads = std::move(x.grads);
    return x.breakdown.total;
  };
  const nn::ValueFunction value = [&](const nn::ParameterStore&) { return skill_loss_extended(m, batch, noise); };
  EXPECT_LE(nn::grad_check(m.params, loss, value, 100, 1e-6, 73).max_relative_error, 1e-5);
}

}  // namespace
}  // namespace jumpy::skill

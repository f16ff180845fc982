#include "jumpy/skill_model.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "json.hpp"
#include "jumpy/errors.h"
#include "jumpy/nn/adam.h"
#include "jumpy/nn/checkpoint.h"
#include "jumpy/nn/tape.h"

namespace jumpy::skill {
namespace {

using nn::LayerSpec;
using nn::Tape;
using nn::Var;

constexpr int kStateDim = env::kStateDim;
constexpr int kActionDim = env::kActionDim;
constexpr const char* kModelKind = "jumpy-skill-model";

// Seed streams under the training seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kDeltaStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

void require(bool ok, const std::string& message) {
  if (!ok) throw DomainError("SkillModelConfig: " + message);
}

std::vector<LayerSpec> decoder_layers(int in, int hidden, int depth, int out) {
  std::vector<LayerSpec> layers;
  int width = in;
  for (int i = 0; i < depth; ++i) {
    layers.push_back(nn::linear_layer(width, hidden));
    layers.push_back(nn::elu_layer(hidden));
    width = hidden;
  }
  layers.push_back(nn::linear_layer(width, out));
  return layers;
}

int encoder_input_dim(const SkillModelConfig& c) {
  return c.aggregation == Aggregation::kConcat ? (c.context + 1) * c.feature_dim : c.feature_dim;
}

void check_state_rows(const RealMatrix& states, const char* where) {
  if (states.rows() != kStateDim) {
    throw ShapeError(std::string(where) + ": expected 12 state rows, got " +
                     std::to_string(states.rows()));
  }
}

void check_latent(const SkillModel& model, const RealVector& z, const char* where) {
  if (z.size() != model.config.latent_dim) {
    throw ShapeError(std::string(where) + ": latent has " + std::to_string(z.size()) +
                     " entries, expected " + std::to_string(model.config.latent_dim));
  }
}

// Column-averaging matrix mapping B*(K+1) snippet-major columns to B columns.
RealMatrix mean_pool_matrix(int batch, int window) {
  RealMatrix m = RealMatrix::Zero(static_cast<Eigen::Index>(batch) * window, batch);
  for (int b = 0; b < batch; ++b) {
    m.block(static_cast<Eigen::Index>(b) * window, b, window, 1).setConstant(1.0 / window);
  }
  return m;
}

RealMatrix aggregate(const SkillModel& model, const RealMatrix& mixed, int batch) {
  const int window = model.config.context + 1;
  if (model.config.aggregation == Aggregation::kConcat) {
    return mixed.reshaped(static_cast<Eigen::Index>(window) * mixed.rows(), batch);
  }
  return mixed * mean_pool_matrix(batch, window);
}

Var aggregate(Tape& tape, const SkillModel& model, Var mixed, int batch) {
  const int window = model.config.context + 1;
  const auto rows = static_cast<int>(tape.value(mixed).rows());
  if (model.config.aggregation == Aggregation::kConcat) {
    return tape.reshape(mixed, window * rows, batch);
  }
  return tape.matmul(mixed, tape.constant(mean_pool_matrix(batch, window)));
}

// Normalized, clamped jumpy targets (12 x B) for snippet-major `states`.
RealMatrix jumpy_targets(const SkillModel& model, const RealMatrix& states, int batch) {
  const int window = model.config.context + 1;
  RealMatrix out(kStateDim, batch);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index first = static_cast<Eigen::Index>(b) * window;
    out.col(b) = data::normalize_delta(states.col(first + window - 1) - states.col(first),
                                       model.delta_scale);
  }
  return out;
}

nlohmann::json config_to_json(const SkillModelConfig& c) {
  return {
      {"context", c.context},
      {"feature_dim", c.feature_dim},
      {"latent_dim", c.latent_dim},
      {"embedder_hidden", c.embedder_hidden},
      {"encoder_hidden", c.encoder_hidden},
      {"action_hidden", c.action_hidden},
      {"jumpy_hidden", c.jumpy_hidden},
      {"decoder_depth", c.decoder_depth},
      {"aggregation", std::string(aggregation_name(c.aggregation))},
      {"beta_a", c.beta_a},
      {"beta_s", c.beta_s},
      {"beta_kl", c.beta_kl},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"total_steps", c.total_steps},
      {"log_interval", c.log_interval},
  };
}

SkillModelConfig config_from_json(const nlohmann::json& j) {
  SkillModelConfig c;
  c.context = j.at("context").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.embedder_hidden = j.at("embedder_hidden").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.action_hidden = j.at("action_hidden").get<int>();
  c.jumpy_hidden = j.at("jumpy_hidden").get<int>();
  c.decoder_depth = j.at("decoder_depth").get<int>();
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.beta_a = j.at("beta_a").get<double>();
  c.beta_s = j.at("beta_s").get<double>();
  c.beta_kl = j.at("beta_kl").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.total_steps = j.at("total_steps").get<int>();
  c.log_interval = j.at("log_interval").get<int>();
  c.validate();
  return c;
}

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.kl += b.kl;
  a.action += b.action;
  a.state += b.state;
  a.total += b.total;
  return a;
}

std::string describe_batch(std::span<const data::Snippet> snippets) {
  std::ostringstream os;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    if (i > 0) os << ' ';
    os << '(' << snippets[i].episode << ',' << snippets[i].start << ')';
  }
  return os.str();
}

}  // namespace

std::string_view aggregation_name(Aggregation a) {
  return a == Aggregation::kConcat ? "concat" : "mean";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "concat") return Aggregation::kConcat;
  if (name == "mean") return Aggregation::kMean;
  throw DomainError("unknown encoder aggregation '" + std::string(name) + "'");
}

void SkillModelConfig::validate() const {
  require(context >= 1, "context K must be >= 1");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(embedder_hidden >= 1 && encoder_hidden >= 1 && action_hidden >= 1 && jumpy_hidden >= 1,
          "hidden sizes must be >= 1");
  require(decoder_depth >= 1, "decoder_depth must be >= 1");
  require(beta_a >= 0.0 && beta_s >= 0.0 && beta_kl >= 0.0, "loss coefficients must be >= 0");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(log_interval >= 1, "log_interval must be >= 1");
}

std::vector<nn::ParamId> SkillModel::jumpy_parameter_ids() const {
  return jumpy_decoder.parameter_ids();
}

SkillModel make_skill_model(const SkillModelConfig& config, const data::DeltaScale& scale,
                            std::uint64_t seed) {
  config.validate();
  if (scale.scale.size() != kStateDim) throw ShapeError("make_skill_model: delta scale must have 12 entries");
  if ((scale.scale.array() <= 0.0).any()) throw DomainError("make_skill_model: non-positive delta scale");
  SkillModel m;
  m.config = config;
  m.delta_scale = scale;
  RandomStream rng(seed);
  const int f = config.feature_dim;
  const int l = config.latent_dim;
  m.embedder = nn::make_mlp(m.params, "embedder",
                            {nn::linear_layer(kStateDim, config.embedder_hidden),
                             nn::layer_norm_layer(config.embedder_hidden),
                             nn::elu_layer(config.embedder_hidden),
                             nn::linear_layer(config.embedder_hidden, config.embedder_hidden),
                             nn::elu_layer(config.embedder_hidden),
                             nn::linear_layer(config.embedder_hidden, f), nn::elu_layer(f)},
                            rng);
  m.time_mix = nn::make_mlp(m.params, "encoder.mix", {nn::linear_layer(f, f), nn::elu_layer(f)}, rng);
  m.encoder = nn::make_mlp(m.params, "encoder.mlp",
                           {nn::linear_layer(encoder_input_dim(config), config.encoder_hidden),
                            nn::elu_layer(config.encoder_hidden),
                            nn::linear_layer(config.encoder_hidden, config.encoder_hidden),
                            nn::elu_layer(config.encoder_hidden),
                            nn::linear_layer(config.encoder_hidden, 2 * l)},
                           rng);
  m.action_decoder = nn::make_mlp(
      m.params, "action", decoder_layers(f + l, config.action_hidden, config.decoder_depth, kActionDim), rng);
  m.jumpy_decoder = nn::make_mlp(
      m.params, "jumpy", decoder_layers(f + l, config.jumpy_hidden, config.decoder_depth, kStateDim), rng);
  return m;
}

RealMatrix embed_states(const SkillModel& model, const RealMatrix& states) {
  check_state_rows(states, "embed_states");
  return nn::mlp_forward(model.embedder, model.params, states);
}

RealVector embed_state(const SkillModel& model, const RealVector& state) {
  return embed_states(model, state);
}

nn::DiagGaussian encode(const SkillModel& model, const RealMatrix& states) {
  check_state_rows(states, "encode");
  if (states.cols() != model.config.context + 1) {
    throw ShapeError("encode: snippet has " + std::to_string(states.cols()) + " states, expected " +
                     std::to_string(model.config.context + 1));
  }
  const RealMatrix mixed = nn::mlp_forward(model.time_mix, model.params, embed_states(model, states));
  const RealMatrix head = nn::mlp_forward(model.encoder, model.params, aggregate(model, mixed, 1));
  const int l = model.config.latent_dim;
  nn::DiagGaussian q;
  q.mean = head.col(0).head(l);
  q.log_std = head.col(0).tail(l).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return q;
}

RealVector decode_action(const SkillModel& model, const RealVector& state, const RealVector& z) {
  check_latent(model, z, "decode_action");
  RealVector input(model.config.feature_dim + model.config.latent_dim);
  input << embed_state(model, state), z;
  return nn::mlp_forward(model.action_decoder, model.params, input);
}

RealMatrix decode_jumpy_batch(const SkillModel& model, const RealMatrix& states,
                              const RealMatrix& features, const RealMatrix& latents) {
  check_state_rows(states, "decode_jumpy");
  if (features.rows() != model.config.feature_dim || latents.rows() != model.config.latent_dim ||
      features.cols() != states.cols() || latents.cols() != states.cols()) {
    throw ShapeError("decode_jumpy: feature/latent blocks do not match the state batch");
  }
  RealMatrix input(features.rows() + latents.rows(), states.cols());
  input.topRows(features.rows()) = features;
  input.bottomRows(latents.rows()) = latents;
  const RealMatrix raw = nn::mlp_forward(model.jumpy_decoder, model.params, input);
  const RealMatrix delta = raw.unaryExpr([](double v) { return std::tanh(v); });
  return states + (delta.array().colwise() * model.delta_scale.scale.array()).matrix();
}

RealVector decode_jumpy(const SkillModel& model, const RealVector& state, const RealVector& z) {
  check_latent(model, z, "decode_jumpy");
  const RealMatrix features = embed_state(model, state);
  return decode_jumpy_batch(model, state, features, z);
}

RealVector chained_prediction(const SkillModel& model, const RealMatrix& states) {
  check_state_rows(states, "chained_prediction");
  const int k = model.config.context;
  const auto span = states.cols() - 1;
  if (span < k || span % k != 0) {
    throw ShapeError("chained_prediction: window length must be a positive multiple of K");
  }
  RealVector s = states.col(0);
  for (Eigen::Index start = 0; start < span; start += k) {
    const nn::DiagGaussian q = encode(model, states.middleCols(start, k + 1));
    s = decode_jumpy(model, s, q.mean);
  }
  return s;
}

SnippetBatch make_batch(std::span<const data::Snippet> snippets) {
  if (snippets.empty()) throw DomainError("make_batch: empty batch");
  SnippetBatch batch;
  batch.size = static_cast<int>(snippets.size());
  batch.context = static_cast<int>(snippets.front().actions.cols());
  const int window = batch.context + 1;
  batch.states.resize(kStateDim, static_cast<Eigen::Index>(batch.size) * window);
  batch.actions.resize(kActionDim, static_cast<Eigen::Index>(batch.size) * batch.context);
  for (int b = 0; b < batch.size; ++b) {
    const data::Snippet& s = snippets[static_cast<std::size_t>(b)];
    if (s.states.rows() != kStateDim || s.states.cols() != window || s.actions.rows() != kActionDim ||
        s.actions.cols() != batch.context) {
      throw ShapeError("make_batch: snippets differ in shape");
    }
    batch.states.middleCols(static_cast<Eigen::Index>(b) * window, window) = s.states;
    batch.actions.middleCols(static_cast<Eigen::Index>(b) * batch.context, batch.context) = s.actions;
  }
  return batch;
}

LossResult skill_loss(const SkillModel& model, const SnippetBatch& batch, const RealMatrix& noise,
                      bool with_gradients) {
  const SkillModelConfig& c = model.config;
  if (batch.size < 1) throw DomainError("skill_loss: empty batch");
  if (batch.context != c.context) {
    throw ShapeError("skill_loss: batch context " + std::to_string(batch.context) +
                     " does not match model K " + std::to_string(c.context));
  }
  if (noise.rows() != c.latent_dim || noise.cols() != batch.size) {
    throw ShapeError("skill_loss: noise must be latent_dim x batch");
  }
  const int batch_size = batch.size;
  const int k = c.context;
  const int window = k + 1;
  const int l = c.latent_dim;
  const double inv_b = 1.0 / batch_size;

  Tape tape(model.params);
  const Var states = tape.constant(batch.states);
  const Var features = nn::mlp_forward(tape, model.embedder, states);
  const Var mixed = nn::mlp_forward(tape, model.time_mix, features);
  const Var head = nn::mlp_forward(tape, model.encoder, aggregate(tape, model, mixed, batch_size));
  const Var mean = tape.slice_rows(head, 0, l);
  const Var log_std = tape.clamp(tape.slice_rows(head, l, l), kLogStdMin, kLogStdMax);
  const Var z = tape.add(mean, tape.mul(tape.exp(log_std), tape.constant(noise)));

  std::vector<int> step_cols;
  std::vector<int> step_latents;
  std::vector<int> first_cols;
  step_cols.reserve(static_cast<std::size_t>(batch_size) * k);
  step_latents.reserve(static_cast<std::size_t>(batch_size) * k);
  for (int b = 0; b < batch_size; ++b) {
    first_cols.push_back(b * window);
    for (int j = 0; j < k; ++j) {
      step_cols.push_back(b * window + j);
      step_latents.push_back(b);
    }
  }

  const Var action_in[] = {tape.gather_cols(features, step_cols), tape.gather_cols(z, step_latents)};
  const Var action_pred = nn::mlp_forward(tape, model.action_decoder, tape.concat_rows(action_in));
  const Var action_se = tape.sum_squares(tape.sub(action_pred, tape.constant(batch.actions)));

  const Var jumpy_in[] = {tape.gather_cols(features, first_cols), z};
  const Var delta_pred = tape.tanh(nn::mlp_forward(tape, model.jumpy_decoder, tape.concat_rows(jumpy_in)));
  const Var state_se = tape.sum_squares(
      tape.sub(delta_pred, tape.constant(jumpy_targets(model, batch.states, batch_size))));

  const Var kl = tape.kl_standard(mean, log_std);
  const Var total = tape.add(tape.add(tape.scale(kl, c.beta_kl * inv_b), tape.scale(action_se, 0.5 * c.beta_a * inv_b)),
                             tape.scale(state_se, 0.5 * c.beta_s * inv_b));

  LossResult out;
  out.breakdown.kl = tape.value(kl)(0, 0) * inv_b;
  out.breakdown.action = 0.5 * tape.value(action_se)(0, 0) * inv_b;
  out.breakdown.state = 0.5 * tape.value(state_se)(0, 0) * inv_b;
  out.breakdown.total = tape.value(total)(0, 0);
  if (!std::isfinite(out.breakdown.total)) throw NumericalError("skill_loss: non-finite loss");
  if (with_gradients) out.grads = tape.backward(total);
  return out;
}

long double skill_loss_extended(const SkillModel& model, const SnippetBatch& batch, const RealMatrix& noise) {
  using Ext = nn::ExtendedMatrix;
  const SkillModelConfig& c = model.config;
  if (batch.size < 1 || batch.context != c.context || noise.rows() != c.latent_dim || noise.cols() != batch.size) {
    throw ShapeError("skill_loss_extended: batch does not match the model");
  }
  const int batch_size = batch.size;
  const int k = c.context;
  const int window = k + 1;
  const int l = c.latent_dim;
  const int f = c.feature_dim;
  const Ext features = nn::mlp_forward_extended(model.embedder, model.params, batch.states.cast<long double>());
  const Ext mixed = nn::mlp_forward_extended(model.time_mix, model.params, features);
  Ext pooled;
  if (c.aggregation == Aggregation::kConcat) {
    pooled = mixed.reshaped(static_cast<Eigen::Index>(window) * f, batch_size);
  } else {
    pooled = Ext::Zero(f, batch_size);
    for (int b = 0; b < batch_size; ++b) {
      for (int j = 0; j < window; ++j) pooled.col(b) += mixed.col(b * window + j);
      pooled.col(b) /= static_cast<long double>(window);
    }
  }
  const Ext head = nn::mlp_forward_extended(model.encoder, model.params, pooled);
  const Ext mean = head.topRows(l);
  const Ext log_std = head.bottomRows(l).unaryExpr([](long double v) {
    return std::clamp(v, static_cast<long double>(kLogStdMin), static_cast<long double>(kLogStdMax));
  });
  const Ext z = mean + (log_std.array().exp() * noise.cast<long double>().array()).matrix();

  Ext action_in(f + l, static_cast<Eigen::Index>(batch_size) * k);
  Ext jumpy_in(f + l, batch_size);
  for (int b = 0; b < batch_size; ++b) {
    for (int j = 0; j < k; ++j) {
      action_in.col(b * k + j) << features.col(b * window + j), z.col(b);
    }
    jumpy_in.col(b) << features.col(b * window), z.col(b);
  }
  const Ext action_err =
      nn::mlp_forward_extended(model.action_decoder, model.params, action_in) - batch.actions.cast<long double>();
  const Ext delta = nn::mlp_forward_extended(model.jumpy_decoder, model.params, jumpy_in)
                        .unaryExpr([](long double v) { return std::tanh(v); });
  const Ext state_err = delta - jumpy_targets(model, batch.states, batch_size).cast<long double>();
  const long double kl =
      (0.5L * (mean.array().square() + (2.0L * log_std.array()).exp() - 1.0L) - log_std.array()).sum();
  const long double inv_b = 1.0L / batch_size;
  return static_cast<long double>(c.beta_kl) * kl * inv_b +
         0.5L * static_cast<long double>(c.beta_a) * action_err.squaredNorm() * inv_b +
         0.5L * static_cast<long double>(c.beta_s) * state_err.squaredNorm() * inv_b;
}

LossResult skill_loss(const SkillModel& model, const SnippetBatch& batch, RandomStream& rng,
                      bool with_gradients) {
  RealMatrix noise(model.config.latent_dim, batch.size);
  for (Eigen::Index b = 0; b < noise.cols(); ++b) {
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, b) = rng.gaussian();
  }
  return skill_loss(model, batch, noise, with_gradients);
}

TrainResult train(const data::Dataset& dataset, const SkillModelConfig& config, std::uint64_t seed,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.episodes.empty()) throw DomainError("train: empty dataset");
  TrainResult result;
  if (options.initial != nullptr) {
    result.model = *options.initial;
    if (result.model.config.context != config.context) throw ShapeError("train: initial model has a different K");
    result.model.config = config;
  } else {
    const data::DeltaScale scale = options.delta_scale != nullptr
                                       ? *options.delta_scale
                                       : data::compute_delta_stats(dataset, config.context,
                                                                   derive_seed(seed, kDeltaStream));
    result.model = make_skill_model(config, scale, derive_seed(seed, kInitStream));
  }
  SkillModel& model = result.model;

  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  nn::AdamState adam = nn::make_adam_state(model.params, adam_config);
  const std::vector<nn::ParamId> only =
      options.jumpy_only ? model.jumpy_parameter_ids() : std::vector<nn::ParamId>{};

  RandomStream batch_rng(derive_seed(seed, kBatchStream));
  RandomStream noise_rng(derive_seed(seed, kNoiseStream));
  std::vector<data::Snippet> snippets(static_cast<std::size_t>(config.batch_size));
  LossBreakdown window_sum;
  int window_count = 0;
  for (int step = 0; step < config.total_steps; ++step) {
    for (auto& s : snippets) s = data::sample_snippet(dataset, batch_rng, config.context);
    LossResult loss;
    try {
      loss = skill_loss(model, make_batch(snippets), noise_rng);
    } catch (const NumericalError& e) {
      throw NumericalError("train: step " + std::to_string(step) + ": " + e.what() +
                           "; batch (episode,start): " + describe_batch(snippets));
    }
    nn::adam_step(model.params, loss.grads, adam, only);
    window_sum += loss.breakdown;
    ++window_count;
    if (window_count == config.log_interval || step + 1 == config.total_steps) {
      TrainLogRow row;
      row.step = step + 1;
      row.mean.kl = window_sum.kl / window_count;
      row.mean.action = window_sum.action / window_count;
      row.mean.state = window_sum.state / window_count;
      row.mean.total = window_sum.total / window_count;
      result.log.push_back(row);
      if (options.on_log) options.on_log(row);
      window_sum = {};
      window_count = 0;
    }
  }
  return result;
}

LossResult jumpy_loss(const SkillModel& model, std::span<const JumpyTriple> triples, bool with_gradients) {
  if (triples.empty()) throw DomainError("jumpy_loss: no triples");
  const auto n = static_cast<Eigen::Index>(triples.size());
  RealMatrix states(kStateDim, n);
  RealMatrix latents(model.config.latent_dim, n);
  RealMatrix targets(kStateDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const JumpyTriple& t = triples[static_cast<std::size_t>(i)];
    if (t.state.size() != kStateDim || t.target.size() != kStateDim ||
        t.latent.size() != model.config.latent_dim) {
      throw ShapeError("jumpy_loss: triple has wrong dimensions");
    }
    states.col(i) = t.state;
    latents.col(i) = t.latent;
    targets.col(i) = data::normalize_delta(t.target - t.state, model.delta_scale);
  }
  Tape tape(model.params);
  const Var features = nn::mlp_forward(tape, model.embedder, tape.constant(std::move(states)));
  const Var input[] = {features, tape.constant(std::move(latents))};
  const Var pred = tape.tanh(nn::mlp_forward(tape, model.jumpy_decoder, tape.concat_rows(input)));
  const Var se = tape.sum_squares(tape.sub(pred, tape.constant(std::move(targets))));
  const double inv_n = 1.0 / static_cast<double>(n);
  const Var total = tape.scale(se, 0.5 * model.config.beta_s * inv_n);
  LossResult out;
  out.breakdown.state = 0.5 * tape.value(se)(0, 0) * inv_n;
  out.breakdown.total = tape.value(total)(0, 0);
  if (!std::isfinite(out.breakdown.total)) throw NumericalError("jumpy_loss: non-finite loss");
  if (with_gradients) out.grads = tape.backward(total);
  return out;
}

SkillModel finetune(const SkillModel& model, std::span<const JumpyTriple> triples, int steps,
                    std::uint64_t seed) {
  if (triples.empty()) throw DomainError("finetune: no planner data");
  if (steps < 0) throw DomainError("finetune: steps must be >= 0");
  SkillModel out = model;
  if (steps == 0) return out;
  nn::AdamConfig adam_config;
  adam_config.learning_rate = model.config.learning_rate;
  nn::AdamState adam = nn::make_adam_state(out.params, adam_config);
  const std::vector<nn::ParamId> only = out.jumpy_parameter_ids();
  RandomStream rng(seed);
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(model.config.batch_size), triples.size());
  std::vector<JumpyTriple> batch(batch_size);
  for (int step = 0; step < steps; ++step) {
    for (auto& t : batch) t = triples[rng.index(triples.size())];
    const LossResult loss = jumpy_loss(out, batch);
    nn::adam_step(out.params, loss.grads, adam, only);
  }
  return out;
}

double jumpy_prediction_error(const SkillModel& model, std::span<const JumpyTriple> triples) {
  if (triples.empty()) throw DomainError("jumpy_prediction_error: no triples");
  double sum = 0.0;
  for (const JumpyTriple& t : triples) sum += (decode_jumpy(model, t.state, t.latent) - t.target).norm();
  return sum / static_cast<double>(triples.size());
}

std::string save_skill_model(const std::filesystem::path& manifest_path, const SkillModel& model) {
  nlohmann::json meta;
  meta["kind"] = kModelKind;
  meta["config"] = config_to_json(model.config);
  meta["delta_scale"] = std::vector<double>(model.delta_scale.scale.data(),
                                            model.delta_scale.scale.data() + model.delta_scale.scale.size());
  return nn::save_checkpoint(manifest_path, model.params, meta.dump());
}

SkillModel load_skill_model(const std::filesystem::path& manifest_path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(manifest_path);
  SkillModelConfig config;
  data::DeltaScale scale;
  try {
    const nlohmann::json meta = nlohmann::json::parse(ckpt.metadata_json);
    if (meta.value("kind", std::string()) != kModelKind) {
      throw StorageError(manifest_path.string() + ": not a skill-model checkpoint");
    }
    config = config_from_json(meta.at("config"));
    const auto values = meta.at("delta_scale").get<std::vector<double>>();
    scale.scale = Eigen::Map<const RealVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  } catch (const nlohmann::json::exception& e) {
    throw StorageError(manifest_path.string() + ": bad skill-model metadata: " + e.what());
  }
  SkillModel model = make_skill_model(config, scale, 0);
  if (ckpt.params.size() != model.params.size()) {
    throw StorageError(manifest_path.string() + ": parameter count does not match the configuration");
  }
  for (nn::ParamId id = 0; id < model.params.size(); ++id) {
    const auto found = ckpt.params.find(model.params.name(id));
    if (!found) throw StorageError(manifest_path.string() + ": missing array " + model.params.name(id));
    const RealMatrix& value = ckpt.params[*found];
    if (value.rows() != model.params[id].rows() || value.cols() != model.params[id].cols()) {
      throw StorageError(manifest_path.string() + ": array " + model.params.name(id) + " has the wrong shape");
    }
    model.params[id] = value;
  }
  return model;
}

}  // namespace jumpy::skill

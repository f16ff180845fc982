#ifndef JUMPY_SKILL_MODEL_H_
#define JUMPY_SKILL_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpy/dataset.h"
#include "jumpy/nn/gaussian.h"
#include "jumpy/nn/mlp.h"

namespace jumpy::skill {

using nn::RealMatrix;
using nn::RealVector;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// How the encoder combines the per-timestep features of a snippet.
enum class Aggregation { kConcat, kMean };

std::string_view aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

struct SkillModelConfig {
  int context = 10;  // K
  int feature_dim = 32;
  int latent_dim = 8;
  int embedder_hidden = 64;
  int encoder_hidden = 64;
  int action_hidden = 64;
  int jumpy_hidden = 64;
  int decoder_depth = 4;  // hidden layers in each decoder
  Aggregation aggregation = Aggregation::kConcat;
  double beta_a = 10.0;
  double beta_s = 10.0;
  double beta_kl = 1.0;
  double learning_rate = 3e-4;
  int batch_size = 64;
  int total_steps = 20000;
  int log_interval = 100;

  // Throws DomainError on any out-of-range field.
  void validate() const;
};

// phi (embedder), theta_z (time mix + encoder), theta_a (action decoder),
// theta_s (jumpy decoder) share one parameter store.
struct SkillModel {
  SkillModelConfig config;
  nn::ParameterStore params;
  nn::Mlp embedder;
  nn::Mlp time_mix;
  nn::Mlp encoder;
  nn::Mlp action_decoder;
  nn::Mlp jumpy_decoder;
  data::DeltaScale delta_scale;

  std::vector<nn::ParamId> jumpy_parameter_ids() const;
};

SkillModel make_skill_model(const SkillModelConfig& config, const data::DeltaScale& scale,
                            std::uint64_t seed);

// --- inference (one sample per column) -----------------------------------

RealMatrix embed_states(const SkillModel& model, const RealMatrix& states);
RealVector embed_state(const SkillModel& model, const RealVector& state);

// `states` is 12 x (K+1).
nn::DiagGaussian encode(const SkillModel& model, const RealMatrix& states);

// Unclamped action mean.
RealVector decode_action(const SkillModel& model, const RealVector& state, const RealVector& z);

RealVector decode_jumpy(const SkillModel& model, const RealVector& state, const RealVector& z);
// Batched form with the state features already computed.
RealMatrix decode_jumpy_batch(const SkillModel& model, const RealMatrix& states,
                              const RealMatrix& features, const RealMatrix& latents);

// Chains decode_jumpy across a true window of M+1 states (M a multiple of K),
// inferring each latent as the posterior mean of the matching K-step
// sub-window. Returns the prediction for the last state.
RealVector chained_prediction(const SkillModel& model, const RealMatrix& states);

// --- objective ------------------------------------------------------------

// Snippets packed snippet-major: column b*(K+1)+k of `states` is s_{t+k} of
// snippet b; column b*K+k of `actions` is a_{t+k}.
struct SnippetBatch {
  RealMatrix states;
  RealMatrix actions;
  int size = 0;
  int context = 0;
};

SnippetBatch make_batch(std::span<const data::Snippet> snippets);

// Batch means. `action` and `state` are half squared errors (the unit-variance
// Gaussian negative log-likelihood up to a constant), before weighting.
struct LossBreakdown {
  double kl = 0.0;
  double action = 0.0;
  double state = 0.0;
  double total = 0.0;  // beta_kl*kl + beta_a*action + beta_s*state
};

struct LossResult {
  LossBreakdown breakdown;
  nn::Gradients grads;
};

// `noise` is latent_dim x batch reparameterization noise. Gradients are
// skipped when `with_gradients` is false.
LossResult skill_loss(const SkillModel& model, const SnippetBatch& batch, const RealMatrix& noise,
                      bool with_gradients = true);
LossResult skill_loss(const SkillModel& model, const SnippetBatch& batch, RandomStream& rng,
                      bool with_gradients = true);

// breakdown.total of skill_loss, recomputed tape-free in long double.
long double skill_loss_extended(const SkillModel& model, const SnippetBatch& batch, const RealMatrix& noise);

// --- training ---------------------------------------------------------------

struct TrainLogRow {
  int step = 0;  // last step of the window
  LossBreakdown mean;
};

struct TrainOptions {
  // Start from this model instead of a fresh initialization.
  const SkillModel* initial = nullptr;
  // Update theta_s only.
  bool jumpy_only = false;
  // Reuse statistics instead of recomputing them from the dataset.
  const data::DeltaScale* delta_scale = nullptr;
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  SkillModel model;
  std::vector<TrainLogRow> log;
};

// Adam on skill_loss over uniformly sampled batches; one log row per
// `log_interval` steps holding the window means.
TrainResult train(const data::Dataset& dataset, const SkillModelConfig& config, std::uint64_t seed,
                  const TrainOptions& options = {});

// (s_t, z_t, s_{t+K}) recorded while executing plans.
struct JumpyTriple {
  RealVector state;
  RealVector latent;
  RealVector target;
};

// Half squared normalized-delta error, batch mean, beta_s weighted.
LossResult jumpy_loss(const SkillModel& model, std::span<const JumpyTriple> triples,
                      bool with_gradients = true);

// Updates theta_s only, with z fixed to the executed latents.
SkillModel finetune(const SkillModel& model, std::span<const JumpyTriple> triples, int steps,
                    std::uint64_t seed);

// Mean L2 distance between decode_jumpy(s, z) and the recorded s_{t+K}.
double jumpy_prediction_error(const SkillModel& model, std::span<const JumpyTriple> triples);

// --- persistence ------------------------------------------------------------

std::string save_skill_model(const std::filesystem::path& manifest_path, const SkillModel& model);
SkillModel load_skill_model(const std::filesystem::path& manifest_path);

}  // namespace jumpy::skill

#endif  // JUMPY_SKILL_MODEL_H_

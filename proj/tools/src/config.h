#ifndef JUMPY_TOOLS_CONFIG_H_
#define JUMPY_TOOLS_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jumpy/env.h"
#include "jumpy/harness.h"
#include "jumpy/skill_model.h"

namespace jumpy::cli {

struct DataConfig {
  int episodes = 500;
  bool motion_noise = true;
  int segment_steps = data::kSegmentSteps;
};

struct SweepConfig {
  std::vector<int> jumpy_horizons{std::begin(harness::kDefaultJumpyHorizons),
                                  std::end(harness::kDefaultJumpyHorizons)};
  std::vector<int> holds{std::begin(harness::kDefaultHolds), std::end(harness::kDefaultHolds)};
  std::vector<int> k1_horizons{std::begin(harness::kDefaultK1Horizons), std::end(harness::kDefaultK1Horizons)};
};

struct FinetuneRunConfig {
  int episodes = 10;
  int steps = 500;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  int threads = 1;
  DataConfig data;
  skill::SkillModelConfig jumpy_model;
  skill::SkillModelConfig k1_model;
  harness::EvalConfig eval;
  std::vector<env::TaskId> tasks;
  std::vector<harness::VariantId> variants;
  int seeds = 50;
  SweepConfig sweep;
  FinetuneRunConfig finetune;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;
};

RunConfig default_run_config();

// Strict: unknown keys, wrong types and out-of-range values raise ConfigError.
RunConfig parse_run_config(std::string_view toml_text, std::string_view source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<env::TaskId> parse_task_list(std::string_view csv);
std::vector<harness::VariantId> parse_variant_list(std::string_view csv);

// Seeds of the pipeline stages, all derived from the master seed.
std::uint64_t dataset_seed(const RunConfig& c);
std::uint64_t train_seed(const RunConfig& c, int context);
std::uint64_t eval_seed(const RunConfig& c);

}  // namespace jumpy::cli

#endif  // JUMPY_TOOLS_CONFIG_H_

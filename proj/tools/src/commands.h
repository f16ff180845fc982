#ifndef JUMPY_TOOLS_COMMANDS_H_
#define JUMPY_TOOLS_COMMANDS_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.h"

namespace jumpy::cli {

struct Paths {
  std::filesystem::path dataset;
  std::filesystem::path dataset_meta;
  std::filesystem::path records;
  std::filesystem::path summary;
  std::filesystem::path viz_dir;

  std::filesystem::path model(int context) const;
  std::filesystem::path train_log(int context) const;
  std::filesystem::path sweep(const std::string& mode) const;
};

Paths paths_for(const std::filesystem::path& out_dir);

struct GenDataResult {
  std::filesystem::path path;
  std::string sha256;
  int episodes = 0;
};

// Fails with StorageError (and writes nothing) when the output dir is missing.
GenDataResult cmd_gen_data(const RunConfig& config);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::string blob_sha256;
  std::size_t log_rows = 0;
};

// Trains the model with context `k` (10 or 1) from `dataset` (default: the
// run's dataset file).
TrainOutcome cmd_train(const RunConfig& config, int k, const std::optional<std::filesystem::path>& dataset = {});

struct EvalOutcome {
  std::size_t rows = 0;
  std::size_t failed_cells = 0;
};

EvalOutcome cmd_eval(const RunConfig& config);

struct SweepOverrides {
  std::optional<int> horizon;
  std::optional<int> hold;
};

// `mode` is "jumpy" or "k1".
EvalOutcome cmd_sweep(const RunConfig& config, const std::string& mode, const SweepOverrides& overrides = {});

struct VizOutcome {
  std::size_t svgs = 0;
  std::size_t warnings = 0;
};

VizOutcome cmd_viz(const std::filesystem::path& records, const std::filesystem::path& out_dir);

struct GradCheckReport {
  double full = 0.0;
  double kl = 0.0;
  double action = 0.0;
  double state = 0.0;
  std::size_t probes = 0;
  double threshold = 1e-5;

  bool pass() const { return full <= threshold && kl <= threshold && action <= threshold && state <= threshold; }
};

// Random miniature skill model and batch; the full loss and each term alone
// are checked against central differences. `corrupt_gradient` perturbs the
// analytic gradient (negative control).
GradCheckReport cmd_grad_check(std::uint64_t seed, std::size_t probes, bool corrupt_gradient = false);

}  // namespace jumpy::cli

#endif  // JUMPY_TOOLS_COMMANDS_H_

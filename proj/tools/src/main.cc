#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.h"
#include "config.h"
#include "jumpy/errors.h"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("jumpy");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* level = std::getenv("JMP_LOG");
  const std::string name = level != nullptr ? level : "info";
  if (name == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"jumpy: latent-skill planning with jumpy models"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<int> seeds;
  std::optional<std::string> tasks;
  std::optional<std::string> variants;
  std::optional<int> k;
  std::optional<int> horizon;
  std::optional<int> hold;
  std::optional<std::string> dataset;
  std::optional<std::string> records;
  std::string mode = "jumpy";
  std::size_t probes = 200;
  bool corrupt = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "TOML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto add_eval = [&](CLI::App* cmd) {
    cmd->add_option("--seeds", seeds, "evaluation seeds per cell")->check(CLI::PositiveNumber);
    cmd->add_option("--tasks", tasks, "comma-separated task names");
    cmd->add_option("--variants", variants, "comma-separated variant names");
    cmd->add_option("--horizon", horizon, "planning horizon")->check(CLI::PositiveNumber);
    cmd->add_option("--hold", hold, "actions executed per planned latent")->check(CLI::PositiveNumber);
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the offline dataset");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "train the skill model(s)");
  add_common(train);
  train->add_option("--k", k, "context length (10 or 1); both when omitted");
  train->add_option("--dataset", dataset, "dataset file (default: <out>/dataset.jmpd)");
  CLI::App* eval = app.add_subcommand("eval", "evaluate variants over tasks");
  add_common(eval);
  add_eval(eval);
  CLI::App* sweep = app.add_subcommand("sweep", "horizon/hold sweeps");
  add_common(sweep);
  add_eval(sweep);
  sweep->add_option("--mode", mode, "jumpy or k1")->check(CLI::IsMember({"jumpy", "k1"}));
  CLI::App* viz = app.add_subcommand("viz", "render planning traces as SVG");
  add_common(viz);
  viz->add_option("--records", records, "records JSONL (default: <out>/records.jsonl)");
  CLI::App* grad = app.add_subcommand("grad-check", "finite-difference check of the training loss");
  add_common(grad);
  grad->add_option("--probes", probes, "probed coordinates")->check(CLI::PositiveNumber);
  grad->add_flag("--corrupt-gradient", corrupt)->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    jumpy::cli::RunConfig config = config_path.empty() ? jumpy::cli::default_run_config()
                                                       : jumpy::cli::load_run_config(config_path);
    if (seed) config.seed = *seed;
    if (out_dir) config.out_dir = *out_dir;
    if (threads) config.threads = config.eval.threads = *threads;
    if (seeds) config.seeds = *seeds;
    if (tasks) config.tasks = jumpy::cli::parse_task_list(*tasks);
    if (variants) config.variants = jumpy::cli::parse_variant_list(*variants);
    if (horizon && eval->parsed()) config.eval.jumpy_planner.horizon = *horizon;
    if (hold && eval->parsed()) config.eval.jumpy_planner.hold_steps = config.eval.k1_planner.hold_steps = *hold;
    config.validate();

    if (gen->parsed()) {
      const auto r = jumpy::cli::cmd_gen_data(config);
      std::cout << r.path.string() << " " << r.sha256 << "\n";
      return 0;
    }
    if (train->parsed()) {
      const std::optional<std::filesystem::path> source =
          dataset ? std::optional<std::filesystem::path>(*dataset) : std::nullopt;
      const std::vector<int> contexts = k ? std::vector<int>{*k} : std::vector<int>{config.jumpy_model.context, 1};
      for (int context : contexts) {
        const auto r = jumpy::cli::cmd_train(config, context, source);
        std::cout << r.checkpoint.string() << " " << r.blob_sha256 << "\n";
      }
      return 0;
    }
    if (eval->parsed()) {
      const auto r = jumpy::cli::cmd_eval(config);
      std::cout << r.rows << " summary rows, " << r.failed_cells << " failed cells\n";
      return r.failed_cells == 0 ? 0 : 1;
    }
    if (sweep->parsed()) {
      const auto r = jumpy::cli::cmd_sweep(config, mode, {horizon, hold});
      std::cout << r.rows << " sweep cells, " << r.failed_cells << " failed tasks\n";
      return r.failed_cells == 0 ? 0 : 1;
    }
    if (viz->parsed()) {
      const auto p = jumpy::cli::paths_for(config.out_dir);
      const auto r = jumpy::cli::cmd_viz(records ? std::filesystem::path(*records) : p.records, p.viz_dir);
      std::cout << r.svgs << " SVG files, " << r.warnings << " warnings\n";
      return 0;
    }
    if (grad->parsed()) {
      const auto r = jumpy::cli::cmd_grad_check(config.seed, probes, corrupt);
      std::cout << "probes " << r.probes << "\n"
                << "kl      max relative error " << r.kl << "\n"
                << "action  max relative error " << r.action << "\n"
                << "state   max relative error " << r.state << "\n"
                << "full    max relative error " << r.full << "\n"
                << (r.pass() ? "PASS" : "FAIL") << " (threshold " << r.threshold << ")\n";
      return r.pass() ? 0 : 1;
    }
  } catch (const jumpy::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

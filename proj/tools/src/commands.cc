#include "commands.h"

#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "jumpy/dataset.h"
#include "jumpy/errors.h"
#include "jumpy/io.h"
#include "jumpy/nn/grad_check.h"
#include "svg.h"

namespace jumpy::cli {
namespace {

namespace fs = std::filesystem;

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw StorageError("output directory does not exist: " + dir.string());
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

harness::Models load_models(const RunConfig& config, std::optional<skill::SkillModel>& jumpy,
                            std::optional<skill::SkillModel>& k1) {
  const Paths p = paths_for(config.out_dir);
  if (fs::exists(p.model(config.jumpy_model.context))) {
    jumpy = skill::load_skill_model(p.model(config.jumpy_model.context));
  }
  if (fs::exists(p.model(1))) k1 = skill::load_skill_model(p.model(1));
  return {jumpy ? &*jumpy : nullptr, k1 ? &*k1 : nullptr};
}

void require_models(const harness::Models& models, harness::VariantId v, const RunConfig& config) {
  const Paths p = paths_for(config.out_dir);
  const bool jumpy_needed = v == harness::VariantId::kRandomHl || v == harness::VariantId::kZeroshotPlanJumpy ||
                            v == harness::VariantId::kPlanFinetune;
  if (jumpy_needed && models.jumpy == nullptr) {
    throw ConfigError("variant " + std::string(harness::variant_name(v)) + " needs checkpoint " +
                      p.model(config.jumpy_model.context).string());
  }
  if (v == harness::VariantId::kZeroshotPlanK1 && models.k1 == nullptr) {
    throw ConfigError("variant zeroshot_plan_k1 needs checkpoint " + p.model(1).string());
  }
}

}  // namespace

fs::path Paths::model(int context) const { return dataset.parent_path() / ("model_k" + std::to_string(context) + ".json"); }
fs::path Paths::train_log(int context) const {
  return dataset.parent_path() / ("train_k" + std::to_string(context) + ".csv");
}
fs::path Paths::sweep(const std::string& mode) const { return dataset.parent_path() / ("sweep_" + mode + ".csv"); }

Paths paths_for(const fs::path& out_dir) {
  Paths p;
  p.dataset = out_dir / "dataset.jmpd";
  p.dataset_meta = out_dir / "dataset.json";
  p.records = out_dir / "records.jsonl";
  p.summary = out_dir / "summary.csv";
  p.viz_dir = out_dir / "viz";
  return p;
}

GenDataResult cmd_gen_data(const RunConfig& config) {
  require_dir(config.out_dir);
  const Paths p = paths_for(config.out_dir);
  spdlog::info("generating {} episodes (seed {})", config.data.episodes, config.seed);
  const data::Dataset ds = data::generate_dataset(config.data.episodes, dataset_seed(config), config.data.motion_noise,
                                                  config.threads, config.data.segment_steps);
  GenDataResult out;
  out.path = p.dataset;
  out.episodes = config.data.episodes;
  out.sha256 = data::write_dataset(p.dataset, ds);
  std::ostringstream meta;
  meta << "{\n  \"format\": \"JMPD1\",\n  \"file\": \"" << json_escape(p.dataset.filename().string())
       << "\",\n  \"master_seed\": " << config.seed << ",\n  \"dataset_seed\": " << ds.master_seed
       << ",\n  \"episodes\": " << ds.episodes.size() << ",\n  \"episode_steps\": " << ds.episode_steps
       << ",\n  \"transitions\": " << ds.transition_count() << ",\n  \"motion_noise\": "
       << (ds.motion_noise ? "true" : "false") << ",\n  \"sha256\": \"" << out.sha256 << "\"\n}\n";
  write_file_atomic(p.dataset_meta, meta.str());
  spdlog::info("wrote {} (sha256 {})", p.dataset.string(), out.sha256);
  return out;
}

TrainOutcome cmd_train(const RunConfig& config, int k, const std::optional<fs::path>& dataset) {
  require_dir(config.out_dir);
  const Paths p = paths_for(config.out_dir);
  skill::SkillModelConfig model_config;
  if (k == config.jumpy_model.context) {
    model_config = config.jumpy_model;
  } else if (k == 1) {
    model_config = config.k1_model;
  } else {
    throw ConfigError("--k must be 1 or " + std::to_string(config.jumpy_model.context));
  }
  const fs::path source = dataset.value_or(p.dataset);
  const data::Dataset ds = data::read_dataset(source);
  if (ds.episode_steps != 2 * config.data.segment_steps) {
    throw ConfigError(source.string() + ": header episode length " + std::to_string(ds.episode_steps) +
                      " does not match the configured " + std::to_string(2 * config.data.segment_steps));
  }
  if (model_config.context > ds.episode_steps) {
    throw ConfigError(source.string() + ": episodes are shorter than K=" + std::to_string(model_config.context));
  }
  spdlog::info("training K={} for {} steps", k, model_config.total_steps);
  skill::TrainOptions options;
  options.on_log = [&](const skill::TrainLogRow& row) {
    spdlog::debug("K={} step {} total {:.6f} kl {:.6f} action {:.6f} state {:.6f}", k, row.step, row.mean.total,
                  row.mean.kl, row.mean.action, row.mean.state);
    if (row.step % (model_config.log_interval * 20) == 0) spdlog::info("K={} step {} loss {:.6f}", k, row.step, row.mean.total);
  };
  const skill::TrainResult result = skill::train(ds, model_config, train_seed(config, k), options);
  std::string csv = "step,kl,action_term,state_term,total\n";
  char buf[160];
  for (const auto& row : result.log) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", row.step, row.mean.kl, row.mean.action,
                  row.mean.state, row.mean.total);
    csv += buf;
  }
  write_file_atomic(p.train_log(k), csv);
  TrainOutcome out;
  out.checkpoint = p.model(k);
  out.log_rows = result.log.size();
  out.blob_sha256 = skill::save_skill_model(out.checkpoint, result.model);
  spdlog::info("wrote {} (blob sha256 {})", out.checkpoint.string(), out.blob_sha256);
  return out;
}

EvalOutcome cmd_eval(const RunConfig& config) {
  require_dir(config.out_dir);
  const Paths p = paths_for(config.out_dir);
  std::optional<skill::SkillModel> jumpy;
  std::optional<skill::SkillModel> k1;
  const harness::Models models = load_models(config, jumpy, k1);
  for (harness::VariantId v : config.variants) {
    if (v != harness::VariantId::kBasePolicyReference) require_models(models, v, config);
  }
  EvalOutcome out;
  std::string csv = harness::summary_csv_header() + "\n";
  std::string jsonl;
  for (env::TaskId task : config.tasks) {
    for (harness::VariantId v : config.variants) {
      if (v == harness::VariantId::kBasePolicyReference && !harness::has_reference(task)) continue;
      try {
        const harness::Evaluation e = harness::evaluate(v, task, config.seeds, models, config.eval, eval_seed(config));
        csv += harness::summary_csv_row(e.summary) + "\n";
        for (const auto& r : e.records) jsonl += harness::record_to_json(r) + "\n";
        ++out.rows;
        spdlog::info("{} / {}: mean return {:.2f} (std {:.2f})", env::task_name(task), harness::variant_name(v),
                     e.summary.mean_return, e.summary.std_return);
      } catch (const std::exception& e) {
        ++out.failed_cells;
        spdlog::error("{} / {} failed: {}", env::task_name(task), harness::variant_name(v), e.what());
      }
    }
  }
  write_file_atomic(p.summary, csv);
  write_file_atomic(p.records, jsonl);
  return out;
}

EvalOutcome cmd_sweep(const RunConfig& config, const std::string& mode, const SweepOverrides& overrides) {
  if (mode != "jumpy" && mode != "k1") throw ConfigError("--mode must be jumpy or k1");
  require_dir(config.out_dir);
  std::optional<skill::SkillModel> jumpy;
  std::optional<skill::SkillModel> k1;
  const harness::Models models = load_models(config, jumpy, k1);
  require_models(models, mode == "jumpy" ? harness::VariantId::kZeroshotPlanJumpy : harness::VariantId::kZeroshotPlanK1,
                 config);
  std::vector<int> horizons = mode == "jumpy" ? config.sweep.jumpy_horizons : config.sweep.k1_horizons;
  std::vector<int> holds = config.sweep.holds;
  if (overrides.horizon) horizons = {*overrides.horizon};
  if (overrides.hold) holds = {*overrides.hold};
  harness::EvalConfig eval = config.eval;
  if (mode == "k1" && overrides.hold) eval.k1_planner.hold_steps = *overrides.hold;

  EvalOutcome out;
  std::string csv = harness::sweep_csv_header() + "\n";
  for (env::TaskId task : config.tasks) {
    try {
      const auto cells = mode == "jumpy"
                             ? harness::sweep_jumpy(task, horizons, holds, config.seeds, models, eval, eval_seed(config))
                             : harness::sweep_k1(task, horizons, config.seeds, models, eval, eval_seed(config));
      for (const auto& cell : cells) {
        csv += harness::sweep_csv_row(cell) + "\n";
        ++out.rows;
        spdlog::info("{} H={} hold={}: mean return {:.2f}", env::task_name(task), cell.horizon, cell.hold,
                     cell.evaluation.summary.mean_return);
      }
    } catch (const std::exception& e) {
      ++out.failed_cells;
      spdlog::error("sweep on {} failed: {}", env::task_name(task), e.what());
    }
  }
  write_file_atomic(paths_for(config.out_dir).sweep(mode), csv);
  return out;
}

VizOutcome cmd_viz(const fs::path& records, const fs::path& out_dir) {
  std::ifstream in(records);
  if (!in) throw StorageError("cannot open records file " + records.string());
  fs::create_directories(out_dir);
  VizOutcome out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const harness::EvalRecord r = harness::record_from_json(line);
    const std::string stem = std::string(env::task_name(r.task)) + "_" + std::string(harness::variant_name(r.variant)) +
                             "_" + std::to_string(index++);
    if (r.trace.empty()) {
      ++out.warnings;
      spdlog::warn("record {} has no planning trace; skipped", stem);
      continue;
    }
    write_file_atomic(out_dir / (stem + "_trace.svg"),
                      trace_svg(r.trace, stem + ": planned score vs obtained reward"));
    ++out.svgs;
    if (!r.states.empty()) {
      write_file_atomic(out_dir / (stem + "_path.svg"), trajectory_svg(r.states, stem + ": top-down trajectory"));
      ++out.svgs;
    }
  }
  if (out.svgs == 0) {
    ++out.warnings;
    spdlog::warn("no records with planning traces in {}", records.string());
  }
  return out;
}

GradCheckReport cmd_grad_check(std::uint64_t seed, std::size_t probes, bool corrupt_gradient) {
  skill::SkillModelConfig c;
  c.context = 3;
  c.feature_dim = 6;
  c.latent_dim = 3;
  c.embedder_hidden = 8;
  c.encoder_hidden = 8;
  c.action_hidden = 8;
  c.jumpy_hidden = 8;
  c.decoder_depth = 2;
  c.batch_size = 4;
  const data::Dataset ds = data::generate_dataset(2, derive_seed(seed, 0), true, 1, 20);
  const data::DeltaScale scale = data::compute_delta_stats(ds, c.context, derive_seed(seed, 1), 2000);
  skill::SkillModel model = skill::make_skill_model(c, scale, derive_seed(seed, 2));
  RandomStream rng(derive_seed(seed, 3));
  std::vector<data::Snippet> snippets;
  for (int i = 0; i < c.batch_size; ++i) snippets.push_back(data::sample_snippet(ds, rng, c.context));
  const skill::SnippetBatch batch = skill::make_batch(snippets);
  nn::RealMatrix noise(c.latent_dim, c.batch_size);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.gaussian();

  GradCheckReport report;
  report.probes = probes;
  auto check = [&](double beta_kl, double beta_a, double beta_s) {
    skill::SkillModel m = model;
    m.config.beta_kl = beta_kl;
    m.config.beta_a = beta_a;
    m.config.beta_s = beta_s;
    const nn::LossFunction loss = [&](const nn::ParameterStore&, nn::Gradients* grads) {
      skill::LossResult r = skill::skill_loss(m, batch, noise, grads != nullptr);
      if (grads != nullptr) {
        if (corrupt_gradient) {
          for (auto& g : r.grads) g *= 1.01;
        }
        *grads = std::move(r.grads);
      }
      return r.breakdown.total;
    };
    const nn::ValueFunction value = [&](const nn::ParameterStore&) {
      return skill::skill_loss_extended(m, batch, noise);
    };
    return nn::grad_check(m.params, loss, value, probes, 1e-6, derive_seed(seed, 4)).max_relative_error;
  };
  report.full = check(1.0, 1.0, 1.0);
  report.kl = check(1.0, 0.0, 0.0);
  report.action = check(0.0, 1.0, 0.0);
  report.state = check(0.0, 0.0, 1.0);
  return report;
}

}  // namespace jumpy::cli

#include "config.h"

#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#include "jumpy/errors.h"
#include "jumpy/io.h"
#include "toml.hpp"

namespace jumpy::cli {
namespace {

// Wraps a TOML table, records which keys were read and rejects the rest.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  template <typename T>
  void read(std::string_view key, T& out) {
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    seen_.insert(std::string(key));
    if constexpr (std::is_same_v<T, bool>) {
      const auto v = node->value_exact<bool>();
      if (!v) fail(key, "expected a boolean");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = node->value_exact<std::int64_t>();
      if (!v) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (*v < 0) fail(key, "must be non-negative");
      } else {
        if (*v < std::numeric_limits<T>::min() || *v > std::numeric_limits<T>::max()) fail(key, "out of range");
      }
      out = static_cast<T>(*v);
    } else if constexpr (std::is_floating_point_v<T>) {
      const auto v = node->value<double>();
      if (!v) fail(key, "expected a number");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      const auto v = node->value_exact<std::string>();
      if (!v) fail(key, "expected a string");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      const toml::array* arr = node->as_array();
      if (arr == nullptr) fail(key, "expected an array of integers");
      out.clear();
      for (const toml::node& item : *arr) {
        const auto v = item.value_exact<std::int64_t>();
        if (!v) fail(key, "expected an array of integers");
        out.push_back(static_cast<int>(*v));
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      const toml::array* arr = node->as_array();
      if (arr == nullptr) fail(key, "expected an array of strings");
      out.clear();
      for (const toml::node& item : *arr) {
        const auto v = item.value_exact<std::string>();
        if (!v) fail(key, "expected an array of strings");
        out.push_back(*v);
      }
    }
  }

  Section child(std::string_view key) {
    if (table_ == nullptr) return Section(nullptr, join(key));
    const toml::node* node = table_->get(key);
    if (node == nullptr) return Section(nullptr, join(key));
    seen_.insert(std::string(key));
    if (!node->is_table()) fail(key, "expected a table");
    return Section(node->as_table(), join(key));
  }

  bool has_key_read(std::string_view key) const { return seen_.count(std::string(key)) > 0; }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("unknown config key '" + join(k.str()) + "'");
      }
    }
  }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw ConfigError("config key '" + join(key) + "': " + std::string(what));
  }

 private:
  std::string join(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(Section& s, skill::SkillModelConfig& c, bool allow_context) {
  if (allow_context) s.read("context", c.context);
  s.read("feature_dim", c.feature_dim);
  s.read("latent_dim", c.latent_dim);
  s.read("embedder_hidden", c.embedder_hidden);
  s.read("encoder_hidden", c.encoder_hidden);
  s.read("action_hidden", c.action_hidden);
  s.read("jumpy_hidden", c.jumpy_hidden);
  s.read("decoder_depth", c.decoder_depth);
  std::string aggregation;
  s.read("aggregation", aggregation);
  if (!aggregation.empty()) {
    try {
      c.aggregation = skill::parse_aggregation(aggregation);
    } catch (const DomainError& e) {
      s.fail("aggregation", e.what());
    }
  }
  s.read("beta_a", c.beta_a);
  s.read("beta_s", c.beta_s);
  s.read("beta_kl", c.beta_kl);
  s.read("learning_rate", c.learning_rate);
  s.read("batch_size", c.batch_size);
  s.read("total_steps", c.total_steps);
  s.read("log_interval", c.log_interval);
}

void read_planner(Section& s, plan::PlannerConfig& c) {
  s.read("iterations", c.iterations);
  s.read("samples", c.samples);
  s.read("horizon", c.horizon);
  s.read("elite_fraction", c.elite_fraction);
  s.read("discount", c.discount);
  s.read("hold_steps", c.hold_steps);
  s.read("init_std", c.init_std);
  s.read("std_floor", c.std_floor);
}

template <typename Fn>
void rethrow_as_config(std::string_view what, Fn&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::vector<std::string> split_csv(std::string_view csv) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(csv)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.jumpy_model.context = 10;
  c.k1_model.context = 1;
  c.k1_model.beta_a = 100.0;
  c.k1_model.beta_s = 100.0;
  c.eval.k1_planner.horizon = 10;
  const auto tasks = env::all_tasks();
  c.tasks.assign(tasks.begin(), tasks.end());
  c.variants = {harness::VariantId::kRandomHl, harness::VariantId::kZeroshotPlanJumpy,
                harness::VariantId::kZeroshotPlanK1, harness::VariantId::kBasePolicyReference};
  return c;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (data.episodes < 1) throw ConfigError("data.episodes must be >= 1");
  if (data.segment_steps < 1) throw ConfigError("data.segment_steps must be >= 1");
  if (seeds < 1) throw ConfigError("eval.seeds must be >= 1");
  if (tasks.empty()) throw ConfigError("eval.tasks must not be empty");
  if (variants.empty()) throw ConfigError("eval.variants must not be empty");
  if (sweep.jumpy_horizons.empty() || sweep.holds.empty() || sweep.k1_horizons.empty()) {
    throw ConfigError("sweep grids must not be empty");
  }
  for (int v : sweep.jumpy_horizons) if (v < 1) throw ConfigError("sweep.jumpy_horizons entries must be >= 1");
  for (int v : sweep.holds) if (v < 1) throw ConfigError("sweep.holds entries must be >= 1");
  for (int v : sweep.k1_horizons) if (v < 1) throw ConfigError("sweep.k1_horizons entries must be >= 1");
  if (finetune.episodes < 1 || finetune.steps < 0) throw ConfigError("finetune report settings out of range");
  rethrow_as_config("model.jumpy", [&] { jumpy_model.validate(); });
  rethrow_as_config("model.k1", [&] { k1_model.validate(); });
  if (k1_model.context != 1) throw ConfigError("model.k1.context must be 1");
  if (jumpy_model.context > 2 * data.segment_steps || jumpy_model.context < 1) {
    throw ConfigError("model.jumpy.context must be in [1, episode length]");
  }
  rethrow_as_config("eval", [&] { eval.validate(); });
}

RunConfig parse_run_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e;
    throw ConfigError("cannot parse " + std::string(source) + ": " + os.str());
  }
  RunConfig c = default_run_config();
  Section top(&root, "");
  top.read("seed", c.seed);
  std::string out_dir = c.out_dir.string();
  top.read("out_dir", out_dir);
  c.out_dir = out_dir;
  top.read("threads", c.threads);

  Section data = top.child("data");
  data.read("episodes", c.data.episodes);
  data.read("motion_noise", c.data.motion_noise);
  data.read("segment_steps", c.data.segment_steps);
  data.finish();

  Section model = top.child("model");
  read_model(model, c.jumpy_model, false);
  read_model(model, c.k1_model, false);
  Section jumpy = model.child("jumpy");
  read_model(jumpy, c.jumpy_model, true);
  jumpy.finish();
  Section k1 = model.child("k1");
  read_model(k1, c.k1_model, true);
  k1.finish();
  model.finish();

  Section planner = top.child("planner");
  const int k1_horizon = c.eval.k1_planner.horizon;
  read_planner(planner, c.eval.jumpy_planner);
  c.eval.k1_planner = c.eval.jumpy_planner;
  c.eval.k1_planner.horizon = k1_horizon;
  Section planner_k1 = planner.child("k1");
  read_planner(planner_k1, c.eval.k1_planner);
  planner_k1.finish();
  planner.finish();

  Section eval = top.child("eval");
  std::vector<std::string> names;
  eval.read("tasks", names);
  if (eval.has_key_read("tasks")) {
    c.tasks.clear();
    for (const auto& n : names) rethrow_as_config("eval.tasks", [&] { c.tasks.push_back(env::parse_task(n)); });
  }
  names.clear();
  eval.read("variants", names);
  if (eval.has_key_read("variants")) {
    c.variants.clear();
    for (const auto& n : names) {
      rethrow_as_config("eval.variants", [&] { c.variants.push_back(harness::parse_variant(n)); });
    }
  }
  eval.read("seeds", c.seeds);
  eval.read("episode_steps", c.eval.episode_steps);
  eval.read("random_hl_hold", c.eval.random_hl_hold);
  eval.read("motion_noise", c.eval.motion_noise);
  eval.read("record_states", c.eval.record_states);
  eval.finish();

  Section sweep = top.child("sweep");
  sweep.read("jumpy_horizons", c.sweep.jumpy_horizons);
  sweep.read("holds", c.sweep.holds);
  sweep.read("k1_horizons", c.sweep.k1_horizons);
  sweep.finish();

  Section finetune = top.child("finetune");
  finetune.read("interval", c.eval.finetune.interval);
  finetune.read("steps", c.eval.finetune.steps);
  finetune.read("report_episodes", c.finetune.episodes);
  finetune.read("report_steps", c.finetune.steps);
  finetune.finish();

  top.finish();
  c.eval.threads = c.threads;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const StorageError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_run_config(text, path.string());
}

std::vector<env::TaskId> parse_task_list(std::string_view csv) {
  std::vector<env::TaskId> out;
  for (const auto& n : split_csv(csv)) rethrow_as_config("--tasks", [&] { out.push_back(env::parse_task(n)); });
  if (out.empty()) throw ConfigError("--tasks: empty list");
  return out;
}

std::vector<harness::VariantId> parse_variant_list(std::string_view csv) {
  std::vector<harness::VariantId> out;
  for (const auto& n : split_csv(csv)) {
    rethrow_as_config("--variants", [&] { out.push_back(harness::parse_variant(n)); });
  }
  if (out.empty()) throw ConfigError("--variants: empty list");
  return out;
}

std::uint64_t dataset_seed(const RunConfig& c) { return derive_seed(c.seed, 1); }
std::uint64_t train_seed(const RunConfig& c, int context) {
  return derive_seed(derive_seed(c.seed, 2), static_cast<std::uint64_t>(context));
}
std::uint64_t eval_seed(const RunConfig& c) { return derive_seed(c.seed, 3); }

}  // namespace jumpy::cli

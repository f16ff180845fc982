#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include "commands.h"
#include "config.h"
#include "jumpy/errors.h"
#include "jumpy/io.h"
#include "svg.h"

namespace jumpy::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("jumpy_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kTinyToml = R"(
seed = 3
threads = 1
[data]
episodes = 4
[model]
feature_dim = 8
latent_dim = 4
embedder_hidden = 16
encoder_hidden = 16
action_hidden = 16
jumpy_hidden = 16
decoder_depth = 2
batch_size = 16
total_steps = 200
[planner]
samples = 16
[eval]
seeds = 2
episode_steps = 30
[sweep]
jumpy_horizons = [1, 2]
holds = [1, 10, 20]
k1_horizons = [1, 5]
)";

RunConfig tiny(const fs::path& out) {
  RunConfig c = parse_run_config(kTinyToml);
  c.out_dir = out;
  return c;
}

// Builds a run directory with a dataset and both models once.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    const fs::path d = scratch("trained");
    const RunConfig c = tiny(d);
    cmd_gen_data(c);
    cmd_train(c, 10);
    cmd_train(c, 1);
    return d;
  }();
  return dir;
}

TEST(Config, DefaultsAndShippedFileAgree) {
  const RunConfig shipped = load_run_config(fs::path(JUMPY_SOURCE_DIR) / "configs" / "default.toml");
  const RunConfig built = default_run_config();
  EXPECT_EQ(shipped.data.episodes, 500);
  EXPECT_EQ(shipped.jumpy_model.context, 10);
  EXPECT_EQ(shipped.k1_model.context, 1);
  EXPECT_EQ(shipped.eval.jumpy_planner.samples, 1000);
  EXPECT_EQ(shipped.eval.jumpy_planner.horizon, 3);
  EXPECT_EQ(shipped.tasks.size(), 9u);
  EXPECT_EQ(shipped.jumpy_model.beta_a, built.jumpy_model.beta_a);
  EXPECT_EQ(shipped.jumpy_model.total_steps, built.jumpy_model.total_steps);
  EXPECT_EQ(shipped.k1_model.beta_a, built.k1_model.beta_a);
  EXPECT_EQ(shipped.k1_model.beta_s, built.k1_model.beta_s);
  EXPECT_EQ(shipped.k1_model.beta_kl, built.k1_model.beta_kl);
  EXPECT_EQ(shipped.seeds, 20);
}

TEST(Config, StrictParsing) {
  EXPECT_THROW(parse_run_config("sed = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nlatnet_dim = 4\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[planner]\nsamples = 0\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[planner]\nelite_fraction = 2.0\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[data]\nepisodes = \"many\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[eval]\ntasks = [\"lift_purple\"]\n"), ConfigError);
  EXPECT_THROW(parse_run_config("this is not toml"), ConfigError);
  EXPECT_NO_THROW(parse_run_config(""));
  EXPECT_THROW(parse_task_list("reach_red,nope"), ConfigError);
  EXPECT_EQ(parse_variant_list("random_hl,zeroshot_plan_k1").size(), 2u);
}

TEST(Config, StageSeedsDiffer) {
  const RunConfig c = default_run_config();
  EXPECT_NE(dataset_seed(c), eval_seed(c));
  EXPECT_NE(train_seed(c, 10), train_seed(c, 1));
}

TEST(GenData, SidecarHashAndRerun) {
  const fs::path d = scratch("gen");
  const RunConfig c = tiny(d);
  const GenDataResult a = cmd_gen_data(c);
  EXPECT_EQ(a.episodes, 4);
  const Paths p = paths_for(d);
  // The content hash covers everything but the 32-byte digest trailer.
  const std::string bytes = read_file(p.dataset);
  EXPECT_EQ(sha256_hex(std::string_view(bytes).substr(0, bytes.size() - 32)), a.sha256);
  EXPECT_NE(slurp(p.dataset_meta).find(a.sha256), std::string::npos);
  const GenDataResult b = cmd_gen_data(c);
  EXPECT_EQ(a.sha256, b.sha256);
}

TEST(GenData, MissingOutputDirWritesNothing) {
  RunConfig c = tiny(fs::temp_directory_path() / "jumpy_cli_absent" / "deeper");
  fs::remove_all(fs::temp_directory_path() / "jumpy_cli_absent");
  EXPECT_THROW(cmd_gen_data(c), StorageError);
  EXPECT_FALSE(fs::exists(c.out_dir));
}

TEST(Train, LogRowsAndCheckpoint) {
  const fs::path d = trained_run();
  const Paths p = paths_for(d);
  EXPECT_TRUE(fs::exists(p.model(10)));
  EXPECT_TRUE(fs::exists(p.model(1)));
  const std::string log = slurp(p.train_log(10));
  EXPECT_EQ(log.substr(0, log.find('\n')), "step,kl,action_term,state_term,total");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 200 / 100);
  for (const auto& entry : fs::directory_iterator(d)) {
    EXPECT_EQ(entry.path().string().find(".tmp"), std::string::npos) << entry.path();
  }
}

TEST(Train, DimensionMismatchIsRejected) {
  const fs::path d = scratch("mismatch");
  RunConfig c = tiny(d);
  c.data.episodes = 1;
  cmd_gen_data(c);
  c.jumpy_model.context = 399;
  EXPECT_ANY_THROW(cmd_train(c, 10));
  EXPECT_THROW(cmd_train(tiny(scratch("nodata")), 10), StorageError);
}

TEST(Eval, RowCountsAndMissingCheckpoint) {
  const fs::path d = scratch("eval");
  fs::copy(trained_run(), d, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  RunConfig c = tiny(d);
  c.seeds = 1;
  c.eval.episode_steps = 10;
  c.variants = parse_variant_list("random_hl,zeroshot_plan_jumpy,zeroshot_plan_k1");
  EXPECT_EQ(cmd_eval(c).rows, 27u);
  const std::string csv = slurp(paths_for(d).summary);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 28);

  c.variants = parse_variant_list("base_policy_reference");
  const EvalOutcome ref = cmd_eval(c);
  EXPECT_EQ(ref.rows, 4u);
  EXPECT_EQ(ref.failed_cells, 0u);

  fs::remove(paths_for(d).model(1));
  c.variants = parse_variant_list("zeroshot_plan_k1");
  try {
    cmd_eval(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("zeroshot_plan_k1"), std::string::npos);
  }
}

TEST(Sweep, CellCountsAndSubsetting) {
  const fs::path d = scratch("sweep");
  fs::copy(trained_run(), d, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  RunConfig c = tiny(d);
  c.seeds = 1;
  c.eval.episode_steps = 20;
  c.tasks = {env::TaskId::kLiftRed};
  EXPECT_EQ(cmd_sweep(c, "jumpy").rows, 6u);
  const std::string full = slurp(paths_for(d).sweep("jumpy"));
  EXPECT_EQ(cmd_sweep(c, "jumpy", SweepOverrides{2, 10}).rows, 1u);
  const std::string one = slurp(paths_for(d).sweep("jumpy"));
  const std::string row = one.substr(one.find('\n') + 1);
  EXPECT_NE(full.find(row), std::string::npos);
  EXPECT_EQ(cmd_sweep(c, "k1").rows, 2u);
  EXPECT_THROW(cmd_sweep(c, "tree"), ConfigError);
}

bool well_formed_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error&) {
    return false;
  }
  return tree.count("svg") == 1;
}

TEST(Viz, SvgFilesAreWellFormed) {
  const fs::path d = scratch("viz");
  fs::copy(trained_run(), d, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  RunConfig c = tiny(d);
  c.seeds = 1;
  c.tasks = {env::TaskId::kRedHoverBlue};
  c.variants = parse_variant_list("random_hl,zeroshot_plan_jumpy");
  cmd_eval(c);
  const VizOutcome v = cmd_viz(paths_for(d).records, d / "viz");
  EXPECT_EQ(v.svgs, 2u);
  EXPECT_EQ(v.warnings, 1u);
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(d / "viz")) {
    const std::string svg = slurp(entry.path());
    EXPECT_TRUE(well_formed_xml(svg)) << entry.path();
    ++seen;
  }
  EXPECT_EQ(seen, 2u);
}

TEST(Viz, EmptyInputWarns) {
  const fs::path d = scratch("viz_empty");
  std::ofstream(d / "empty.jsonl").close();
  const VizOutcome v = cmd_viz(d / "empty.jsonl", d / "out");
  EXPECT_EQ(v.svgs, 0u);
  EXPECT_GT(v.warnings, 0u);
  EXPECT_THROW(cmd_viz(d / "absent.jsonl", d / "out"), StorageError);
}

TEST(Viz, TraceSvgEscapesAndScales) {
  std::vector<harness::TraceRow> rows;
  for (int t = 0; t < 50; ++t) rows.push_back({t, 4.0 * t / 49.0, 0.5});
  EXPECT_TRUE(well_formed_xml(trace_svg(rows, "a < b & c")));
  EXPECT_TRUE(well_formed_xml(trace_svg({}, "empty")));
  const std::vector<env::EnvState> states{env::reset(1), env::reset(2)};
  EXPECT_TRUE(well_formed_xml(trajectory_svg(states, "path")));
}

TEST(GradCheck, PassesAndCatchesCorruption) {
  const GradCheckReport ok = cmd_grad_check(0, 200);
  EXPECT_TRUE(ok.pass()) << ok.full << " " << ok.kl << " " << ok.action << " " << ok.state;
  EXPECT_EQ(ok.probes, 200u);
  const GradCheckReport bad = cmd_grad_check(0, 200, true);
  EXPECT_FALSE(bad.pass());
}

int run_cli(const std::string& args) {
  const std::string command = std::string(JUMPY_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitStatuses) {
  EXPECT_EQ(run_cli("grad-check --probes 50"), 0);
  EXPECT_NE(run_cli("grad-check --probes 50 --corrupt-gradient"), 0);
  EXPECT_NE(run_cli("no-such-command"), 0);
  const fs::path d = scratch("binary");
  std::ofstream(d / "bad.toml") << "[model]\nunknown_key = 1\n";
  EXPECT_NE(run_cli("gen-data --config " + (d / "bad.toml").string() + " --out " + d.string()), 0);
  EXPECT_FALSE(fs::exists(d / "dataset.jmpd"));
}

}  // namespace
}  // namespace jumpy::cli

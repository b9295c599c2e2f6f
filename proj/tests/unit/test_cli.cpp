#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "liprcp/commands.hpp"
#include "liprcp/config.hpp"
#include "liprcp/error.hpp"

using namespace liprcp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("liprcp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LIPRCP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig small_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.synth_n = 1500;
  cfg.train_epochs = 5;
  cfg.epsilon = 0.2;
  cfg.epsilon_grid = {0.0, 0.1, 0.3};
  cfg.attack_steps = 10;
  cfg.poison_k = 10;
  cfg.data = dir / "data.csv";
  cfg.model = dir / "model.json";
  cfg.record = dir / "record.json";
  cfg.out = dir;
  cfg.check = true;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(
      "# comment\n"
      "seed = 12\n"
      "alpha=0.05   # trailing\n"
      "\n"
      "epsilon_grid = 0, 0.1,0.5\n"
      "score_kind = lac_softmax\n"
      "hidden = 8,4\n"
      "robust = true\n");
  CHECK(cfg.seed == 12);
  CHECK(cfg.alpha == 0.05);
  CHECK(cfg.epsilon_grid == std::vector<double>{0.0, 0.1, 0.5});
  CHECK(cfg.score_spec.kind == scores::ScoreKind::LacSoftmax);
  CHECK(cfg.hidden == std::vector<Eigen::Index>{8, 4});
  CHECK(cfg.robust);
  CHECK_NOTHROW(cfg.validate());

  try {
    parse_config("seed = 1\nbogus = 2\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_config("alpha\n"), ParseError);
  CHECK_THROWS_AS(parse_config("alpha = abc\n"), ParseError);
  CHECK_THROWS_AS(parse_config("bound_method = exact\n"), ParseError);

  RunConfig bad;
  bad.epsilon_grid = {0.2, 0.1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.split_cal = 0.9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(config_keys().size() == 35);
}

TEST_CASE("substream seeds differ per purpose") {
  RunConfig cfg;
  cfg.seed = 3;
  CHECK(cfg.split_plan().seed != cfg.train_options().seed);
  CHECK(cfg.attack_config(0.1).seed != cfg.train_options().seed);
  CHECK(cfg.attack_config(0.1).epsilon == 0.1);
}

TEST_CASE("full pipeline in process") {
  const auto dir = fresh_dir("pipeline");
  const auto cfg = small_config(dir);
  for (const auto& name : commands::command_names()) {
    CAPTURE(name);
    const auto result = commands::run_command(name, cfg);
    CHECK(result.passed());
    CHECK(!result.checks.empty());
    CHECK(result.report().at("checks_passed") == true);
  }
  for (const char* f : {"data.csv", "data.json", "model.json", "record.json", "sets.csv", "robust_sets.csv",
                        "audit.csv", "audit.json", "attack_sweep.csv", "poison.json"})
    CHECK(fs::exists(dir / f));
  CHECK_THROWS_AS(commands::run_command("nope", cfg), ConfigError);

  // A record inflated for a radius cannot be audited.
  auto robust_cfg = cfg;
  robust_cfg.robust = true;
  commands::run_command("calibrate", robust_cfg);
  CHECK_THROWS_AS(commands::run_command("audit", cfg), Error);
  fs::remove_all(dir);
}

TEST_CASE("binary: exit codes and byte-identical reruns") {
  const auto dir = fresh_dir("binary");
  // Inputs live in a/, where the first pass writes them.
  const auto in = dir / "a";
  const std::string common = "--seed 9 --set synth_n=1200 --set train_epochs=3 --set attack_steps=5 --set epsilon_grid=0,0.2 --data " +
                             (in / "data.csv").string() + " --model " + (in / "model.json").string() + " --record " +
                             (in / "record.json").string();
  for (const auto& name : commands::command_names()) {
    CAPTURE(name);
    CHECK(run_cli(name + " " + common + " --out " + (dir / "a").string() + " --check") == 0);
  }
  // Second pass into a different directory, reading the same inputs.
  for (const auto& name : commands::command_names()) {
    if (name == "synth" || name == "train" || name == "calibrate") continue;
    CHECK(run_cli(name + " " + common + " --out " + (dir / "b").string()) == 0);
  }
  for (const char* f : {"sets.csv", "robust_sets.csv", "audit.csv", "attack_sweep.csv", "poison.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  CHECK(run_cli("calibrate --alpha 0.00001 --data " + (in / "data.csv").string() + " --model " +
                (in / "model.json").string() + " --out " + (dir / "c").string()) == 2);
  CHECK(run_cli("calibrate --set nonsense=1") == 1);
  CHECK(run_cli("frobnicate") != 0);

  const auto cfg_path = dir / "run.cfg";
  std::ofstream(cfg_path) << "alpha = 0.2\nseed = 9\n";
  CHECK(run_cli("calibrate -c " + cfg_path.string() + " --set alpha=0.1 --seed 9 --data " + (in / "data.csv").string() +
                " --model " + (in / "model.json").string() + " --out " + (dir / "d").string()) == 0);
  CHECK(slurp(dir / "d" / "record.json").find("\"alpha\": 0.1") != std::string::npos);
  fs::remove_all(dir);
}

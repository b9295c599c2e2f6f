// liprcp: command-line front end. Every subcommand reads an optional
// key = value config file, applies --set overrides and the named flags (in
// that order), runs, and prints a JSON summary on stdout.
//
// Exit status: 0 success, 1 error, 2 invalid risk level, 3 a --check failed.

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "liprcp/commands.hpp"
#include "liprcp/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> named;
  bool check = false;
};

void add_named(CLI::App* sub, Flags& flags, const std::string& key, const std::string& help) {
  sub->add_option_function<std::string>(
      "--" + key, [&flags, key](const std::string& v) { flags.named.emplace_back(key, v); }, help);
}

const std::map<std::string, std::string> kAbout = {
    {"synth", "write a seeded Gaussian-mixture dataset"},
    {"train", "train an orthogonal GroupSort network"},
    {"calibrate", "split-conformal calibration (robust = true inflates for epsilon)"},
    {"predict", "vanilla prediction sets on the test split"},
    {"robust-predict", "conservative and restrictive sets at radius epsilon"},
    {"audit", "certified coverage band over epsilon_grid"},
    {"attack-eval", "PGD coverage under attack over epsilon_grid"},
    {"poison-certify", "quantile range under k poisoned calibration points"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified robust conformal prediction with Lipschitz classifiers"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;

  for (const auto& name : liprcp::commands::command_names()) {
    auto* sub = app.add_subcommand(name, kAbout.at(name));
    sub->add_option("--config,-c", flags.config, "key = value config file");
    sub->add_option("--set", flags.sets, "override: key=value (repeatable)");
    sub->add_flag("--check", flags.check, "verify invariants; exit 3 if any fails");
    add_named(sub, flags, "seed", "top-level seed");
    add_named(sub, flags, "alpha", "risk level");
    add_named(sub, flags, "epsilon", "l2 radius");
    add_named(sub, flags, "delta", "audit risk");
    add_named(sub, flags, "data", "dataset CSV");
    add_named(sub, flags, "model", "model JSON");
    add_named(sub, flags, "record", "calibration record JSON");
    add_named(sub, flags, "out", "output directory");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    liprcp::RunConfig cfg;
    if (!flags.config.empty()) cfg = liprcp::load_config(flags.config);
    for (const auto& kv : flags.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw liprcp::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : flags.named) cfg.set(key, value);
    if (flags.check) cfg.check = true;

    const auto result = liprcp::commands::run_command(chosen, cfg);
    std::cout << result.report().dump(2) << '\n';
    if (!result.passed()) {
      std::cerr << "liprcp " << chosen << ": invariant check failed\n";
      return 3;
    }
    return 0;
  } catch (const liprcp::InvalidRiskError& e) {
    std::cerr << "liprcp " << chosen << ": invalid risk level: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "liprcp " << chosen << ": " << e.what() << '\n';
    return 1;
  }
}

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "liprcp/config.hpp"

namespace liprcp::commands {

/// What a command prints on success. `checks` maps each invariant checked
/// under `check = true` to its outcome; it is empty otherwise.
struct CommandResult {
  nlohmann::json summary;
  std::vector<std::pair<std::string, bool>> checks;

  bool passed() const;
  /// The summary with a "checks" object attached when checks ran.
  nlohmann::json report() const;
};

// Output files, all written under cfg.out:
//   synth           data.csv, data.json
//   train           model.json
//   calibrate       record.json
//   predict         sets.csv
//   robust-predict  robust_sets.csv
//   audit           audit.csv, audit.json
//   attack-eval     attack_sweep.csv
//   poison-certify  poison.json
CommandResult cmd_synth(const RunConfig& cfg);
CommandResult cmd_train(const RunConfig& cfg);
CommandResult cmd_calibrate(const RunConfig& cfg);
CommandResult cmd_predict(const RunConfig& cfg);
CommandResult cmd_robust_predict(const RunConfig& cfg);
CommandResult cmd_audit(const RunConfig& cfg);
CommandResult cmd_attack_eval(const RunConfig& cfg);
CommandResult cmd_poison_certify(const RunConfig& cfg);

const std::vector<std::string>& command_names();
/// Dispatches by subcommand name. Throws ConfigError for unknown names.
CommandResult run_command(const std::string& name, const RunConfig& cfg);

}  // namespace liprcp::commands

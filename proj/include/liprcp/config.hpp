#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "liprcp/attack.hpp"
#include "liprcp/audit.hpp"
#include "liprcp/datasets.hpp"
#include "liprcp/lipnet.hpp"
#include "liprcp/scores.hpp"

namespace liprcp {

/// Settings shared by every CLI command. Loaded from a `key = value` text
/// file ('#' starts a comment); later assignments override earlier ones.
struct RunConfig {
  std::uint64_t seed = 0;

  double alpha = 0.1;
  double epsilon = 0.0;
  std::vector<double> epsilon_grid;  // empty: audit breakpoints
  double delta = 0.1;

  scores::ScoreSpec score_spec;
  scores::BoundMethod bound_method = scores::BoundMethod::TightMonotone;
  audit::CorrectionMode correction_mode = audit::CorrectionMode::Corrected;
  bool robust = false;  // calibrate: inflate the threshold for epsilon

  int attack_steps = 40;
  double attack_step_size = 0.0;
  int attack_restarts = 3;

  double split_cal = 0.2;
  double split_eval = 0.2;
  double split_test = 0.2;
  std::string predict_split = "test";

  std::size_t synth_n = 10000;
  Eigen::Index synth_d = 16;
  int synth_c = 4;
  double synth_separation = 4.0;

  std::vector<Eigen::Index> hidden{16, 16};  // orthogonal layers need non-increasing widths
  int train_epochs = 30;
  double train_lr = 0.05;
  double train_temperature = 0.25;
  int train_batch = 64;

  std::size_t poison_k = 0;
  bool poison_clip = true;

  /// L_n to assume when the data file already holds logits.
  double lipschitz = 1.0;

  std::filesystem::path data;
  std::filesystem::path model;
  std::filesystem::path record;
  std::filesystem::path out = ".";

  bool check = false;

  /// Assigns one key. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Re-checks every cross-field constraint.
  void validate() const;

  datasets::SplitPlan split_plan() const;
  attack::AttackConfig attack_config(double eps) const;
  lipnet::TrainOptions train_options() const;
};

/// Parses `key = value` lines. Errors carry the line number.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key accepted by RunConfig::set.
const std::vector<std::string>& config_keys();

}  // namespace liprcp

#include "liprcp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "liprcp/error.hpp"
#include "liprcp/rng.hpp"

namespace liprcp {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (value.empty() || ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError("non-finite value for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + value + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  if (trim(value).empty()) return out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",         "alpha",           "epsilon",         "epsilon_grid",     "delta",
      "score_kind",   "temperature",     "bias",            "bound_method",     "correction_mode",
      "robust",       "attack_steps",    "attack_step_size", "attack_restarts", "split_cal",
      "split_eval",   "split_test",      "predict_split",   "synth_n",          "synth_d",
      "synth_c",      "synth_separation", "hidden",         "train_epochs",     "train_lr",
      "train_temperature", "train_batch", "poison_k",       "poison_clip",      "lipschitz",
      "data",         "model",           "record",          "out",              "check",
  };
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  try {
    if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "alpha") alpha = parse_number<double>(key, value);
    else if (key == "epsilon") epsilon = parse_number<double>(key, value);
    else if (key == "epsilon_grid") epsilon_grid = parse_list<double>(key, value);
    else if (key == "delta") delta = parse_number<double>(key, value);
    else if (key == "score_kind") score_spec.kind = scores::score_kind_from_string(value);
    else if (key == "temperature") score_spec.temperature = parse_number<double>(key, value);
    else if (key == "bias") score_spec.bias = parse_number<double>(key, value);
    else if (key == "bound_method") bound_method = scores::bound_method_from_string(value);
    else if (key == "correction_mode") correction_mode = audit::correction_mode_from_string(value);
    else if (key == "robust") robust = parse_bool(key, value);
    else if (key == "attack_steps") attack_steps = parse_number<int>(key, value);
    else if (key == "attack_step_size") attack_step_size = parse_number<double>(key, value);
    else if (key == "attack_restarts") attack_restarts = parse_number<int>(key, value);
    else if (key == "split_cal") split_cal = parse_number<double>(key, value);
    else if (key == "split_eval") split_eval = parse_number<double>(key, value);
    else if (key == "split_test") split_test = parse_number<double>(key, value);
    else if (key == "predict_split") predict_split = value;
    else if (key == "synth_n") synth_n = parse_number<std::size_t>(key, value);
    else if (key == "synth_d") synth_d = parse_number<Eigen::Index>(key, value);
    else if (key == "synth_c") synth_c = parse_number<int>(key, value);
    else if (key == "synth_separation") synth_separation = parse_number<double>(key, value);
    else if (key == "hidden") hidden = parse_list<Eigen::Index>(key, value);
    else if (key == "train_epochs") train_epochs = parse_number<int>(key, value);
    else if (key == "train_lr") train_lr = parse_number<double>(key, value);
    else if (key == "train_temperature") train_temperature = parse_number<double>(key, value);
    else if (key == "train_batch") train_batch = parse_number<int>(key, value);
    else if (key == "poison_k") poison_k = parse_number<std::size_t>(key, value);
    else if (key == "poison_clip") poison_clip = parse_bool(key, value);
    else if (key == "lipschitz") lipschitz = parse_number<double>(key, value);
    else if (key == "data") data = value;
    else if (key == "model") model = value;
    else if (key == "record") record = value;
    else if (key == "out") out = value;
    else if (key == "check") check = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  for (std::size_t i = 0; i < epsilon_grid.size(); ++i) {
    if (!(epsilon_grid[i] >= 0.0)) throw ConfigError("epsilon_grid entries must be >= 0");
    if (i > 0 && !(epsilon_grid[i] > epsilon_grid[i - 1]))
      throw ConfigError("epsilon_grid must be strictly increasing");
  }
  try {
    score_spec.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (attack_steps < 0 || attack_restarts < 1 || attack_step_size < 0.0)
    throw ConfigError("attack settings need steps >= 0, restarts >= 1, step size >= 0");
  for (double f : {split_cal, split_eval, split_test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (split_cal + split_eval + split_test > 1.0 + 1e-12) throw ConfigError("split fractions sum to more than 1");
  if (predict_split != "cal" && predict_split != "eval" && predict_split != "test" && predict_split != "all")
    throw ConfigError("predict_split must be one of cal, eval, test, all");
  if (synth_c < 2 || synth_d < 2 || synth_d < synth_c - 1)
    throw ConfigError("synthetic data needs c >= 2, d >= 2 and d >= c - 1");
  if (!(synth_separation >= 0.0)) throw ConfigError("synth_separation must be >= 0");
  for (Eigen::Index w : hidden) {
    if (w < 1) throw ConfigError("hidden widths must be positive");
  }
  if (train_epochs < 0 || !(train_lr > 0.0) || !(train_temperature > 0.0) || train_batch < 1)
    throw ConfigError("training settings need epochs >= 0, lr > 0, temperature > 0, batch >= 1");
  if (!(lipschitz > 0.0)) throw ConfigError("lipschitz must be > 0");
}

datasets::SplitPlan RunConfig::split_plan() const {
  return {split_cal, split_eval, split_test, Rng(seed).substream("split").seed()};
}

attack::AttackConfig RunConfig::attack_config(double eps) const {
  attack::AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.steps = attack_steps;
  cfg.step_size = attack_step_size;
  cfg.restarts = attack_restarts;
  cfg.seed = Rng(seed).substream("attack").seed();
  return cfg;
}

lipnet::TrainOptions RunConfig::train_options() const {
  lipnet::TrainOptions opt;
  opt.epochs = train_epochs;
  opt.learning_rate = train_lr;
  opt.temperature = train_temperature;
  opt.batch_size = train_batch;
  opt.seed = Rng(seed).substream("train").seed();
  return opt;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      base.set(key, body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::move(base));
}

}  // namespace liprcp

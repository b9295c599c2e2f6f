#include "liprcp/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "liprcp/attack.hpp"
#include "liprcp/audit.hpp"
#include "liprcp/conformal.hpp"
#include "liprcp/datasets.hpp"
#include "liprcp/error.hpp"
#include "liprcp/lipnet.hpp"
#include "liprcp/parallel.hpp"
#include "liprcp/poison.hpp"
#include "liprcp/rng.hpp"
#include "liprcp/robust.hpp"

namespace liprcp::commands {
namespace {

namespace fs = std::filesystem;
using datasets::LabeledDataset;

fs::path output_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out);
  return cfg.out / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

const fs::path& require_path(const fs::path& path, const char* key) {
  if (path.empty()) throw ConfigError(std::string("this command needs '") + key + "'");
  return path;
}

// Logits for every row of the dataset plus the Lipschitz product that
// relates input perturbations to logit perturbations.
struct Scored {
  LabeledDataset data;
  Eigen::MatrixXd logits;
  double lipschitz = 1.0;
  std::optional<lipnet::LipschitzClassifier> model;
};

Scored load_scored(const RunConfig& cfg, bool need_model = false) {
  Scored s;
  s.data = datasets::load_csv(require_path(cfg.data, "data"));
  if (s.data.kind == datasets::DatasetKind::PrecomputedLogits) {
    if (need_model) throw ConfigError("this command needs raw inputs and a model, not precomputed logits");
    s.logits = s.data.values;
    s.lipschitz = cfg.lipschitz;
    return s;
  }
  s.model = lipnet::load_model(require_path(cfg.model, "model"));
  if (s.model->input_dim() != s.data.width())
    throw DimensionError(fmt::format("model expects {} inputs, data has {}", s.model->input_dim(), s.data.width()));
  if (s.data.num_classes > s.model->num_classes())
    throw DimensionError(fmt::format("data has {} classes, model outputs {}", s.data.num_classes,
                                     s.model->num_classes()));
  s.logits = lipnet::forward_rows(*s.model, s.data.values);
  s.lipschitz = s.model->lipschitz_product();
  return s;
}

conformal::CalibrationRecord load_record(const RunConfig& cfg, Eigen::Index classes) {
  const auto doc = nlohmann::json::parse(read_text(require_path(cfg.record, "record")));
  auto record = conformal::record_from_json(doc);
  if (record.num_classes > 0 && record.num_classes != classes)
    throw DimensionError(fmt::format("record was calibrated on {} classes, data has {}", record.num_classes, classes));
  return record;
}

std::vector<std::size_t> rows_for(const RunConfig& cfg, const LabeledDataset& data, const std::string& which) {
  if (which == "all") {
    std::vector<std::size_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
  }
  const auto parts = datasets::split(data, cfg.split_plan());
  if (which == "cal") return parts.cal_rows;
  if (which == "eval") return parts.eval_rows;
  if (which == "test") return parts.test_rows;
  throw ConfigError("unknown split '" + which + "'");
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<double> true_label_scores(const scores::ScoreSpec& spec, const Eigen::MatrixXd& logits,
                                      std::span<const int> labels) {
  std::vector<double> out(labels.size());
  parallel_for(labels.size(), [&](std::size_t i) {
    const Eigen::VectorXd row = logits.row(static_cast<Eigen::Index>(i)).transpose();
    out[i] = scores::score(spec, scores::as_span(row), labels[i]);
  });
  return out;
}

std::string sets_csv(const std::vector<conformal::PredictionSet>& sets) {
  std::string out = "id,set_size,members\n";
  for (const auto& set : sets) {
    out += set.sample_id;
    out += ',';
    out += std::to_string(set.size());
    out += ',';
    for (std::size_t j = 0; j < set.members.size(); ++j) {
      if (j > 0) out += ';';
      out += std::to_string(set.members[j]);
    }
    out += '\n';
  }
  return out;
}

// Coverage and mean size recomputed from a written sets file.
std::pair<double, double> reread_sets(const fs::path& path, const std::vector<std::string>& ids,
                                      std::span<const int> labels) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::size_t row = 0, hits = 0, total = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || row >= ids.size() || line.substr(0, c1) != ids[row])
      return {-1.0, -1.0};
    total += std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
    std::stringstream members(line.substr(c2 + 1));
    std::string item;
    while (std::getline(members, item, ';')) {
      if (!item.empty() && std::stoi(item) == labels[row]) ++hits;
    }
    ++row;
  }
  if (row != ids.size() || row == 0) return {-1.0, -1.0};
  return {static_cast<double>(hits) / static_cast<double>(row), static_cast<double>(total) / static_cast<double>(row)};
}

double mean_size(const std::vector<conformal::PredictionSet>& sets) {
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return sets.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(sets.size());
}

bool subset_of(const conformal::PredictionSet& a, const conformal::PredictionSet& b) {
  return std::includes(b.members.begin(), b.members.end(), a.members.begin(), a.members.end());
}

}  // namespace

bool CommandResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.second; });
}

nlohmann::json CommandResult::report() const {
  nlohmann::json out = summary;
  if (!checks.empty()) {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [name, ok] : checks) c[name] = ok;
    out["checks"] = c;
    out["checks_passed"] = passed();
  }
  return out;
}

CommandResult cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed = Rng(cfg.seed).substream("synth").seed();
  const auto data = datasets::make_gaussian_mixture(cfg.synth_n, cfg.synth_d, cfg.synth_c, cfg.synth_separation, seed);
  const auto csv_path = output_path(cfg, "data.csv");
  const auto meta_path = output_path(cfg, "data.json");
  datasets::save_csv(data, csv_path);
  const auto meta = datasets::metadata_json(data, cfg.seed);
  write_json(meta_path, meta);

  CommandResult result;
  std::vector<std::size_t> per_class(static_cast<std::size_t>(cfg.synth_c), 0);
  for (int y : data.labels) ++per_class[static_cast<std::size_t>(y)];
  result.summary = {{"command", "synth"},
                    {"metadata", meta},
                    {"class_counts", per_class},
                    {"outputs", {csv_path.string(), meta_path.string()}}};
  if (cfg.check) {
    const auto back = datasets::load_csv(csv_path);
    result.checks.emplace_back("csv_round_trip", back.values == data.values && back.labels == data.labels &&
                                                     back.ids == data.ids);
    bool valid = true;
    try {
      data.validate();
    } catch (const Error&) {
      valid = false;
    }
    result.checks.emplace_back("dataset_invariants", valid);
  }
  return result;
}

CommandResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto data = datasets::load_csv(require_path(cfg.data, "data"));
  if (data.kind != datasets::DatasetKind::RawInputs) throw ConfigError("train needs raw inputs");
  const auto parts = datasets::split(data, cfg.split_plan());
  if (parts.remainder.size() == 0)
    throw ConfigError("no rows left for training; the cal/eval/test fractions cover the whole dataset");

  std::vector<Eigen::Index> widths{data.width()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(data.num_classes);
  const auto init = lipnet::make_orthogonal_model(widths, Rng(cfg.seed).substream("init").seed());
  const auto model = lipnet::train_toy(init, parts.remainder.values, parts.remainder.labels, cfg.train_options());
  const auto path = output_path(cfg, "model.json");
  lipnet::save_model(model, path);

  const Eigen::MatrixXd logits = lipnet::forward_rows(model, parts.remainder.values);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < parts.remainder.size(); ++i) {
    Eigen::Index arg = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (arg == parts.remainder.labels[i]) ++correct;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(parts.remainder.size());

  CommandResult result;
  result.summary = {{"command", "train"},
                    {"widths", widths},
                    {"n_train", parts.remainder.size()},
                    {"train_accuracy", accuracy},
                    {"lipschitz_product", model.lipschitz_product()},
                    {"outputs", {path.string()}}};
  if (cfg.check) {
    double worst = 0.0;
    bool all_orthogonal = true;
    for (const auto& layer : model.layers()) {
      if (layer.orthogonal)
        worst = std::max(worst, lipnet::orthogonality_residual(layer.weight));
      else
        all_orthogonal = false;
    }
    result.checks.emplace_back("orthogonality_residual", worst <= 1e-8);
    result.checks.emplace_back("lipschitz_certified", model.lipschitz_certified());
    result.checks.emplace_back("unit_lipschitz_when_orthogonal", !all_orthogonal || model.lipschitz_product() == 1.0);
    const auto reloaded = lipnet::load_model(path);
    result.checks.emplace_back("model_round_trip", lipnet::forward_rows(reloaded, parts.remainder.values) == logits);
  }
  return result;
}

CommandResult cmd_calibrate(const RunConfig& cfg) {
  cfg.validate();
  const auto scored = load_scored(cfg);
  const auto rows = rows_for(cfg, scored.data, "cal");
  const auto cal = scored.data.subset(rows);
  const auto cal_scores = true_label_scores(cfg.score_spec, take_rows(scored.logits, rows), cal.labels);

  conformal::CalibrationRecord record =
      cfg.robust ? robust::robust_calibrate(cal_scores, cfg.alpha, cfg.epsilon, cfg.score_spec, scored.lipschitz)
                 : conformal::calibrate(cal_scores, cfg.alpha, cfg.score_spec, scored.lipschitz);
  record.num_classes = static_cast<int>(scored.logits.cols());
  const auto path = output_path(cfg, "record.json");
  write_json(path, conformal::to_json(record));

  CommandResult result;
  result.summary = {{"command", "calibrate"},
                    {"record", conformal::to_json(record)},
                    {"rank", conformal::conformal_rank(cal_scores.size(), cfg.alpha)},
                    {"outputs", {path.string()}}};
  if (cfg.check) {
    std::vector<double> sorted = cal_scores;
    const double shift = record.epsilon_calibrated == 0.0
                             ? 0.0
                             : record.lipschitz_product * cfg.score_spec.score_lipschitz() * record.epsilon_calibrated;
    for (double& s : sorted) s += shift;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t r = conformal::conformal_rank(sorted.size(), cfg.alpha);
    result.checks.emplace_back("quantile_rank", sorted[r - 1] == record.q_alpha);
    std::size_t hits = 0;
    for (double s : cal_scores) hits += s <= record.q_alpha ? 1 : 0;
    const double in_sample = static_cast<double>(hits) / static_cast<double>(cal_scores.size());
    result.checks.emplace_back("in_sample_coverage", in_sample >= 1.0 - cfg.alpha);
    result.summary["in_sample_coverage"] = in_sample;
  }
  return result;
}

namespace {

CommandResult predict_common(const RunConfig& cfg, bool robust_sets) {
  cfg.validate();
  const auto scored = load_scored(cfg);
  const auto record = load_record(cfg, scored.logits.cols());
  if (robust_sets && record.epsilon_calibrated != 0.0)
    throw ConfigError("robust-predict expects a vanilla record; this one is already inflated for epsilon = " +
                      fmt::format("{}", record.epsilon_calibrated));
  const auto rows = rows_for(cfg, scored.data, cfg.predict_split);
  if (rows.empty()) throw DimensionError("the selected split is empty");
  const auto part = scored.data.subset(rows);
  const Eigen::MatrixXd logits = take_rows(scored.logits, rows);

  std::vector<conformal::PredictionSet> sets(rows.size()), vanilla(rows.size()), restrictive(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const Eigen::VectorXd row = logits.row(static_cast<Eigen::Index>(i)).transpose();
    const auto span = scores::as_span(row);
    vanilla[i] = conformal::prediction_set(record, span, part.ids[i]);
    if (robust_sets) {
      auto pair = robust::robust_sets(record, span, cfg.epsilon, cfg.bound_method, part.ids[i]);
      sets[i] = std::move(pair.conservative);
      restrictive[i] = std::move(pair.restrictive);
    } else {
      sets[i] = vanilla[i];
    }
  });
  const double coverage = conformal::empirical_coverage(sets, part.labels);
  const double size = mean_size(sets);
  const auto path = output_path(cfg, robust_sets ? "robust_sets.csv" : "sets.csv");
  write_text(path, sets_csv(sets));

  CommandResult result;
  result.summary = {{"command", robust_sets ? "robust-predict" : "predict"},
                    {"split", cfg.predict_split},
                    {"n", rows.size()},
                    {"coverage", coverage},
                    {"mean_set_size", size},
                    {"outputs", {path.string()}}};
  if (robust_sets) {
    result.summary["epsilon"] = cfg.epsilon;
    result.summary["bound_method"] = scores::to_string(cfg.bound_method);
    result.summary["vanilla_coverage"] = conformal::empirical_coverage(vanilla, part.labels);
    result.summary["vanilla_mean_set_size"] = mean_size(vanilla);
  }
  if (cfg.check) {
    const auto [cov, sz] = reread_sets(path, part.ids, part.labels);
    result.checks.emplace_back("summary_matches_csv", cov == coverage && sz == size);
    if (robust_sets) {
      bool nested = true;
      for (std::size_t i = 0; i < sets.size(); ++i)
        nested = nested && subset_of(restrictive[i], vanilla[i]) && subset_of(vanilla[i], sets[i]);
      result.checks.emplace_back("restrictive_vanilla_conservative_nesting", nested);
    }
  }
  return result;
}

}  // namespace

CommandResult cmd_predict(const RunConfig& cfg) { return predict_common(cfg, false); }

CommandResult cmd_robust_predict(const RunConfig& cfg) { return predict_common(cfg, true); }

namespace {

struct AuditRun {
  conformal::CalibrationRecord record;
  LabeledDataset eval;
  Eigen::MatrixXd eval_logits;
  audit::CriticalEpsilons crit;
  audit::CoverageCurves curves;
  audit::CertifiedBand band;
  std::vector<audit::AuditRow> rows;
  std::optional<lipnet::LipschitzClassifier> model;
};

AuditRun run_audit(const RunConfig& cfg, bool need_model) {
  auto scored = load_scored(cfg, need_model);
  AuditRun run;
  run.record = load_record(cfg, scored.logits.cols());
  if (run.record.epsilon_calibrated != 0.0) throw ConfigError("audits apply to vanilla calibration records");
  const auto rows = rows_for(cfg, scored.data, "eval");
  run.eval = scored.data.subset(rows);
  run.eval_logits = take_rows(scored.logits, rows);
  run.crit = audit::critical_epsilons(run.record, run.eval_logits, run.eval.labels, cfg.bound_method);
  run.curves = audit::coverage_curves(run.crit);
  run.band = audit::certified_band(run.curves, cfg.delta, cfg.correction_mode);
  run.rows = audit::audit_rows(run.curves, run.band, cfg.epsilon_grid);
  run.model = std::move(scored.model);
  return run;
}

}  // namespace

CommandResult cmd_audit(const RunConfig& cfg) {
  cfg.validate();
  const auto run = run_audit(cfg, false);
  const auto csv_path = output_path(cfg, "audit.csv");
  const auto side_path = output_path(cfg, "audit.json");
  audit::write_audit_csv(run.rows, csv_path);
  const auto sidecar = audit::band_sidecar(run.band, run.record);
  write_json(side_path, sidecar);

  CommandResult result;
  result.summary = {{"command", "audit"},
                    {"band", sidecar},
                    {"bound_method", scores::to_string(cfg.bound_method)},
                    {"rows", run.rows.size()},
                    {"warnings", run.crit.warnings},
                    {"outputs", {csv_path.string(), side_path.string()}}};
  if (cfg.check) {
    bool sandwich = true, monotone = true;
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
      const auto& r = run.rows[i];
      sandwich = sandwich && r.covmin_minus <= r.covmin_emp && r.covmin_emp <= r.covmax_emp &&
                 r.covmax_emp <= r.covmax_plus;
      if (i > 0) {
        const auto& p = run.rows[i - 1];
        monotone = monotone && r.covmax_emp >= p.covmax_emp && r.covmin_emp <= p.covmin_emp;
      }
    }
    result.checks.emplace_back("band_sandwich", sandwich);
    result.checks.emplace_back("curve_monotonicity", monotone);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < run.eval.size(); ++i) {
      const Eigen::VectorXd row = run.eval_logits.row(static_cast<Eigen::Index>(i)).transpose();
      hits += conformal::prediction_set(run.record, scores::as_span(row)).contains(run.eval.labels[i]) ? 1 : 0;
    }
    const double vanilla = static_cast<double>(hits) / static_cast<double>(run.eval.size());
    result.checks.emplace_back("curves_start_at_vanilla_coverage",
                               run.curves.covmax(0.0) == vanilla && run.curves.covmin(0.0) == vanilla);
  }
  return result;
}

CommandResult cmd_attack_eval(const RunConfig& cfg) {
  cfg.validate();
  const auto run = run_audit(cfg, true);
  std::string csv = "epsilon,coverage_under_attack,mean_set_size,band_lower,band_upper\n";
  std::size_t contained = 0;
  double worst_excess = 0.0;
  for (const auto& row : run.rows) {
    const auto outcome = attack::coverage_under_attack(*run.model, run.record, run.eval.values, run.eval.labels,
                                                       cfg.attack_config(row.epsilon));
    csv += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.epsilon, outcome.coverage,
                       outcome.mean_set_size, row.covmin_minus, row.covmax_plus);
    if (row.covmin_minus <= outcome.coverage && outcome.coverage <= row.covmax_plus) ++contained;
    worst_excess = std::max(worst_excess, outcome.max_perturbation - row.epsilon);
  }
  const auto path = output_path(cfg, "attack_sweep.csv");
  write_text(path, csv);

  CommandResult result;
  result.summary = {{"command", "attack-eval"},
                    {"rows", run.rows.size()},
                    {"rows_inside_band", contained},
                    {"m", run.eval.size()},
                    {"outputs", {path.string()}}};
  if (cfg.check) {
    result.checks.emplace_back("coverage_inside_band", contained == run.rows.size());
    result.checks.emplace_back("perturbations_inside_ball", worst_excess <= 0.0);
  }
  return result;
}

CommandResult cmd_poison_certify(const RunConfig& cfg) {
  cfg.validate();
  const auto scored = load_scored(cfg);
  const auto rows = rows_for(cfg, scored.data, "cal");
  const auto cal = scored.data.subset(rows);
  const auto cal_scores = true_label_scores(cfg.score_spec, take_rows(scored.logits, rows), cal.labels);
  const auto budget = poison::PoisonBudget::from_features(cfg.poison_k, cfg.epsilon, cfg.score_spec, scored.lipschitz);
  const auto cert = poison::quantile_shift(cal_scores, cfg.alpha, budget, cfg.poison_clip);
  const auto doc = poison::to_json(cert);
  const auto path = output_path(cfg, "poison.json");
  write_json(path, doc);

  CommandResult result;
  result.summary = {{"command", "poison-certify"}, {"certificate", doc}, {"outputs", {path.string()}}};
  if (cfg.check) {
    result.checks.emplace_back("ordered", cert.q_min <= cert.q_nominal && cert.q_nominal <= cert.q_max);
    result.checks.emplace_back("shift_at_most_delta", cert.q_max - cert.q_nominal <= budget.delta_score + 1e-12 &&
                                                          cert.q_nominal - cert.q_min <= budget.delta_score + 1e-12);
  }
  return result;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth",          "train", "calibrate",   "predict",
                                                 "robust-predict", "audit", "attack-eval", "poison-certify"};
  return names;
}

CommandResult run_command(const std::string& name, const RunConfig& cfg) {
  if (name == "synth") return cmd_synth(cfg);
  if (name == "train") return cmd_train(cfg);
  if (name == "calibrate") return cmd_calibrate(cfg);
  if (name == "predict") return cmd_predict(cfg);
  if (name == "robust-predict") return cmd_robust_predict(cfg);
  if (name == "audit") return cmd_audit(cfg);
  if (name == "attack-eval") return cmd_attack_eval(cfg);
  if (name == "poison-certify") return cmd_poison_certify(cfg);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace liprcp::commands

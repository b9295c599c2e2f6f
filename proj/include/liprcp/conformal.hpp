#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "liprcp/scores.hpp"

namespace liprcp::conformal {

/// Portable result of a calibration run.
struct CalibrationRecord {
  double q_alpha = 0.0;
  double alpha = 0.1;
  std::size_t n_cal = 0;
  scores::ScoreSpec score_spec;
  double lipschitz_product = 1.0;
  /// Radius the threshold was inflated for; 0 for vanilla calibration.
  double epsilon_calibrated = 0.0;
  /// Number of classes seen at calibration; 0 when unknown.
  int num_classes = 0;
};

struct PredictionSet {
  std::vector<int> members;  // ascending class ids
  std::string sample_id;

  bool contains(int label) const;
  std::size_t size() const { return members.size(); }
};

/// 1-based rank ceil((n + 1)(1 - alpha)) of the conformal quantile.
/// Throws InvalidRiskError unless 1/(n + 1) <= alpha < 1.
std::size_t conformal_rank(std::size_t n, double alpha);

/// The conformal_rank(n, alpha)-th smallest score.
double conformal_quantile(std::span<const double> scores, double alpha);

CalibrationRecord calibrate(std::span<const double> scores, double alpha, const scores::ScoreSpec& spec,
                            double lipschitz_product = 1.0);

/// {y : score(logits, y) <= q_alpha}.
PredictionSet prediction_set(const CalibrationRecord& cal, std::span<const double> logits,
                             std::string sample_id = {});

double empirical_coverage(std::span<const PredictionSet> sets, std::span<const int> labels);

nlohmann::json to_json(const CalibrationRecord& record);
CalibrationRecord record_from_json(const nlohmann::json& doc);

}  // namespace liprcp::conformal

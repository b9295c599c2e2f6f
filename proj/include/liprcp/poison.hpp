#pragma once

#include <cstddef>
#include <span>

#include "json.hpp"
#include "liprcp/conformal.hpp"
#include "liprcp/scores.hpp"

namespace liprcp::poison {

/// At most k calibration points, each with features moved by at most
/// epsilon in l2. Each poisoned score then moves by at most delta_score.
struct PoisonBudget {
  std::size_t k = 0;
  double epsilon = 0.0;
  double delta_score = 0.0;

  /// delta_score = L_n * L_s * epsilon.
  static PoisonBudget from_features(std::size_t k, double epsilon, const scores::ScoreSpec& spec,
                                    double lipschitz_product);
};

/// Exact range of the conformal quantile over every admissible poisoning.
struct QuantileShiftCertificate {
  double q_min = 0.0;
  double q_nominal = 0.0;
  double q_max = 0.0;
  std::size_t rank = 0;
  PoisonBudget budget;
  /// Shifted scores were clamped to [0, 1].
  bool clipped = true;
};

/// The order statistic of rank r is coordinate-wise non-decreasing, so the
/// extremes come from full-budget moves: q_max raises the k scores at and
/// above rank r, q_min lowers the k scores at and below it. After one sort
/// both are closed forms: min(a_r + delta, a_{r+k}) and max(a_r - delta, a_{r-k}).
QuantileShiftCertificate quantile_shift(std::span<const double> scores, double alpha, const PoisonBudget& budget,
                                        bool clip_to_unit = true);

/// Calibration record using the pessimistic threshold q_max.
conformal::CalibrationRecord poison_robust_calibrate(std::span<const double> scores, double alpha,
                                                     const PoisonBudget& budget, const scores::ScoreSpec& spec,
                                                     double lipschitz_product, bool clip_to_unit = true);

nlohmann::json to_json(const QuantileShiftCertificate& cert);

}  // namespace liprcp::poison

#pragma once

#include <span>
#include <string>

#include "liprcp/conformal.hpp"
#include "liprcp/scores.hpp"

namespace liprcp::robust {

using conformal::CalibrationRecord;
using conformal::PredictionSet;
using scores::BoundMethod;

/// Sandwich of the vanilla set: restrictive <= vanilla <= conservative.
struct RobustSetPair {
  PredictionSet conservative;
  PredictionSet restrictive;
  double epsilon = 0.0;
  BoundMethod method = BoundMethod::TightMonotone;
};

/// {y : lower score bound over the epsilon-ball <= q_alpha}. Contains the
/// vanilla set of every point of the ball, so it keeps 1 - alpha coverage
/// under any attack of radius epsilon.
PredictionSet conservative_set(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                               BoundMethod method = BoundMethod::TightMonotone, std::string sample_id = {});

/// {y : upper score bound over the epsilon-ball <= q_alpha}.
PredictionSet restrictive_set(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                              BoundMethod method = BoundMethod::TightMonotone, std::string sample_id = {});

RobustSetPair robust_sets(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                          BoundMethod method = BoundMethod::TightMonotone, std::string sample_id = {});

/// Calibration on scores inflated by L_n L_s epsilon. Because the rank
/// statistic commutes with a constant shift, vanilla prediction with the
/// returned record gives the same sets as conservative_set with the global
/// method and the vanilla record.
CalibrationRecord robust_calibrate(std::span<const double> cal_scores, double alpha, double epsilon,
                                   const scores::ScoreSpec& spec, double lipschitz_product);

}  // namespace liprcp::robust

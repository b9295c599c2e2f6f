#include "liprcp/robust.hpp"

#include <vector>

#include "liprcp/error.hpp"

namespace liprcp::robust {
namespace {

template <bool UseLower>
PredictionSet bounded_set(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                          BoundMethod method, std::string sample_id) {
  PredictionSet set;
  set.sample_id = std::move(sample_id);
  for (std::size_t y = 0; y < logits.size(); ++y) {
    const double b = scores::bound_one_side(cal.score_spec, logits, static_cast<Eigen::Index>(y), epsilon,
                                            cal.lipschitz_product, method,
                                            UseLower ? scores::BoundSide::Lower : scores::BoundSide::Upper);
    if (b <= cal.q_alpha) set.members.push_back(static_cast<int>(y));
  }
  return set;
}

}  // namespace

PredictionSet conservative_set(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                               BoundMethod method, std::string sample_id) {
  return bounded_set<true>(cal, logits, epsilon, method, std::move(sample_id));
}

PredictionSet restrictive_set(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                              BoundMethod method, std::string sample_id) {
  return bounded_set<false>(cal, logits, epsilon, method, std::move(sample_id));
}

RobustSetPair robust_sets(const CalibrationRecord& cal, std::span<const double> logits, double epsilon,
                          BoundMethod method, std::string sample_id) {
  RobustSetPair pair;
  pair.epsilon = epsilon;
  pair.method = method;
  pair.restrictive = restrictive_set(cal, logits, epsilon, method, sample_id);
  pair.conservative = conservative_set(cal, logits, epsilon, method, std::move(sample_id));
  return pair;
}

CalibrationRecord robust_calibrate(std::span<const double> cal_scores, double alpha, double epsilon,
                                   const scores::ScoreSpec& spec, double lipschitz_product) {
  if (!(epsilon >= 0.0)) throw DomainError("epsilon must be >= 0");
  const double shift = epsilon == 0.0 ? 0.0 : lipschitz_product * spec.score_lipschitz() * epsilon;
  std::vector<double> shifted(cal_scores.begin(), cal_scores.end());
  for (double& s : shifted) s += shift;
  CalibrationRecord record = conformal::calibrate(shifted, alpha, spec, lipschitz_product);
  record.epsilon_calibrated = epsilon;
  return record;
}

}  // namespace liprcp::robust

#include "liprcp/poison.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "liprcp/error.hpp"

namespace liprcp::poison {

PoisonBudget PoisonBudget::from_features(std::size_t k, double epsilon, const scores::ScoreSpec& spec,
                                         double lipschitz_product) {
  if (!(epsilon >= 0.0)) throw DomainError("poisoning radius must be >= 0");
  PoisonBudget budget;
  budget.k = k;
  budget.epsilon = epsilon;
  budget.delta_score = epsilon == 0.0 ? 0.0 : lipschitz_product * spec.score_lipschitz() * epsilon;
  return budget;
}

QuantileShiftCertificate quantile_shift(std::span<const double> scores, double alpha, const PoisonBudget& budget,
                                        bool clip_to_unit) {
  const std::size_t n = scores.size();
  if (n == 0) throw DimensionError("no calibration scores");
  if (budget.k > n)
    throw DomainError("poisoning budget k = " + std::to_string(budget.k) + " exceeds n = " + std::to_string(n));
  if (!(budget.delta_score >= 0.0) || !std::isfinite(budget.delta_score))
    throw DomainError("score shift must be finite and >= 0");
  if (clip_to_unit) {
    for (double s : scores) {
      if (!(s >= 0.0 && s <= 1.0)) throw DomainError("clipped certificate needs scores in [0, 1]");
    }
  }
  const std::size_t r = conformal::conformal_rank(n, alpha);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());

  QuantileShiftCertificate cert;
  cert.rank = r;
  cert.budget = budget;
  cert.clipped = clip_to_unit;
  cert.q_nominal = sorted[r - 1];
  cert.q_min = cert.q_max = cert.q_nominal;
  if (budget.k == 0 || budget.delta_score == 0.0) return cert;

  // With a_1 <= ... <= a_n sorted, raising a_r..a_{r+k-1} gives
  // min(a_r + delta, a_{r+k}), and no poisoning can beat either term: the r
  // smallest scores all end at or below a_r + delta, and among a_1..a_{r+k}
  // at least r stay put. Lowering a_{r-k+1}..a_r is the mirror image.
  const double delta = budget.delta_score;
  const double up = clip_to_unit ? std::min(1.0, cert.q_nominal + delta) : cert.q_nominal + delta;
  const double down = clip_to_unit ? std::max(0.0, cert.q_nominal - delta) : cert.q_nominal - delta;
  cert.q_max = r + budget.k <= n ? std::min(up, sorted[r + budget.k - 1]) : up;
  cert.q_min = r > budget.k ? std::max(down, sorted[r - budget.k - 1]) : down;
  return cert;
}

conformal::CalibrationRecord poison_robust_calibrate(std::span<const double> scores, double alpha,
                                                     const PoisonBudget& budget, const scores::ScoreSpec& spec,
                                                     double lipschitz_product, bool clip_to_unit) {
  const QuantileShiftCertificate cert = quantile_shift(scores, alpha, budget, clip_to_unit);
  conformal::CalibrationRecord record = conformal::calibrate(scores, alpha, spec, lipschitz_product);
  record.q_alpha = cert.q_max;
  return record;
}

nlohmann::json to_json(const QuantileShiftCertificate& cert) {
  return {{"q_min", cert.q_min},
          {"q_max", cert.q_max},
          {"q_nominal", cert.q_nominal},
          {"rank", cert.rank},
          {"k", cert.budget.k},
          {"epsilon", cert.budget.epsilon},
          {"delta_score", cert.budget.delta_score},
          {"clipped", cert.clipped}};
}

}  // namespace liprcp::poison

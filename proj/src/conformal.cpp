#include "liprcp/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "liprcp/error.hpp"

namespace liprcp::conformal {

bool PredictionSet::contains(int label) const {
  return std::binary_search(members.begin(), members.end(), label);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  if (n == 0) throw DimensionError("no calibration scores");
  const double n1 = static_cast<double>(n + 1);
  if (!(alpha < 1.0) || !(alpha * n1 >= 1.0 - 1e-12))
    throw InvalidRiskError("alpha = " + std::to_string(alpha) + " is outside [1/(n+1), 1) for n = " +
                           std::to_string(n));
  // (n + 1)(1 - alpha) is often an integer in exact arithmetic; absorb the
  // rounding so that it is not pushed to the next rank.
  const double target = n1 * (1.0 - alpha);
  const auto rank = static_cast<std::size_t>(std::ceil(target - 1e-9));
  return std::clamp<std::size_t>(rank, 1, n);
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  const std::size_t rank = conformal_rank(scores.size(), alpha);
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

CalibrationRecord calibrate(std::span<const double> scores, double alpha, const scores::ScoreSpec& spec,
                            double lipschitz_product) {
  spec.validate();
  CalibrationRecord record;
  record.q_alpha = conformal_quantile(scores, alpha);
  record.alpha = alpha;
  record.n_cal = scores.size();
  record.score_spec = spec;
  record.lipschitz_product = lipschitz_product;
  return record;
}

PredictionSet prediction_set(const CalibrationRecord& cal, std::span<const double> logits, std::string sample_id) {
  PredictionSet set;
  set.sample_id = std::move(sample_id);
  for (std::size_t y = 0; y < logits.size(); ++y) {
    if (scores::score(cal.score_spec, logits, static_cast<Eigen::Index>(y)) <= cal.q_alpha)
      set.members.push_back(static_cast<int>(y));
  }
  return set;
}

double empirical_coverage(std::span<const PredictionSet> sets, std::span<const int> labels) {
  if (sets.size() != labels.size())
    throw DimensionError("coverage needs one label per set (" + std::to_string(sets.size()) + " sets, " +
                         std::to_string(labels.size()) + " labels)");
  if (sets.empty()) throw DimensionError("coverage of an empty collection");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) hits += sets[i].contains(labels[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

nlohmann::json to_json(const CalibrationRecord& record) {
  return {{"q_alpha", record.q_alpha},
          {"alpha", record.alpha},
          {"n_cal", record.n_cal},
          {"epsilon_calibrated", record.epsilon_calibrated},
          {"lipschitz_product", record.lipschitz_product},
          {"num_classes", record.num_classes},
          {"score_spec", scores::to_json(record.score_spec)}};
}

CalibrationRecord record_from_json(const nlohmann::json& doc) {
  try {
    CalibrationRecord record;
    record.q_alpha = doc.at("q_alpha").get<double>();
    record.alpha = doc.at("alpha").get<double>();
    record.n_cal = doc.at("n_cal").get<std::size_t>();
    record.epsilon_calibrated = doc.at("epsilon_calibrated").get<double>();
    record.lipschitz_product = doc.at("lipschitz_product").get<double>();
    record.score_spec = scores::score_spec_from_json(doc.at("score_spec"));
    record.num_classes = doc.value("num_classes", 0);
    conformal_rank(record.n_cal, record.alpha);
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed calibration record: ") + e.what());
  }
}

}  // namespace liprcp::conformal

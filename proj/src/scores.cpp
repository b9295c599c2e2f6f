#include "liprcp/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "liprcp/error.hpp"

namespace liprcp::scores {
namespace {

void check_class(std::span<const double> logits, Eigen::Index y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
    throw DimensionError("class index " + std::to_string(y) + " out of range for " +
                         std::to_string(logits.size()) + " logits");
}

void check_radius(double epsilon, double lipschitz_product) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be finite and >= 0");
  if (!(lipschitz_product >= 0.0) || !std::isfinite(lipschitz_product))
    throw DomainError("Lipschitz product must be finite and >= 0");
}

// 1 - sigmoid((target - b) / T) == sigmoid(-(target - b) / T), evaluated
// without cancellation.
double sigmoid_score(const ScoreSpec& spec, double target_logit) {
  return sigmoid(-(target_logit - spec.bias) / spec.temperature);
}

// 1 - softmax(z)_y where z_y = (l_y + target_shift) / T and
// z_k = (l_k + other_shift) / T for k != y.
double softmax_score(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y,
                     double target_shift, double other_shift) {
  const auto yi = static_cast<std::size_t>(y);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double z = (logits[k] + (k == yi ? target_shift : other_shift)) / spec.temperature;
    top = std::max(top, z);
  }
  double others = 0.0;
  double self = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double z = (logits[k] + (k == yi ? target_shift : other_shift)) / spec.temperature;
    if (k == yi)
      self = std::exp(z - top);
    else
      others += std::exp(z - top);
  }
  return others / (others + self);
}

}  // namespace

ScoreSpec ScoreSpec::lac_sigmoid(double temperature, double bias) {
  ScoreSpec spec{ScoreKind::LacSigmoid, temperature, bias};
  spec.validate();
  return spec;
}

ScoreSpec ScoreSpec::lac_softmax(double temperature) {
  ScoreSpec spec{ScoreKind::LacSoftmax, temperature, 0.0};
  spec.validate();
  return spec;
}

double ScoreSpec::score_lipschitz() const {
  if (kind != ScoreKind::LacSigmoid)
    throw UnsupportedMethodError("the LAC softmax score has no global Lipschitz constant; use the tight bound");
  return 1.0 / (4.0 * temperature);
}

void ScoreSpec::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
  if (!std::isfinite(bias)) throw DomainError("bias must be finite");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double score(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y) {
  check_class(logits, y);
  if (spec.kind == ScoreKind::LacSigmoid) return sigmoid_score(spec, logits[static_cast<std::size_t>(y)]);
  return softmax_score(spec, logits, y, 0.0, 0.0);
}

ScoreBound bound_global(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y,
                        double epsilon, double lipschitz_product) {
  check_radius(epsilon, lipschitz_product);
  if (spec.kind != ScoreKind::LacSigmoid)
    throw UnsupportedMethodError("global Lipschitz bound is undefined for the LAC softmax score; use the tight method");
  const double s = score(spec, logits, y);
  const double shift = lipschitz_product * spec.score_lipschitz() * epsilon;
  return {std::max(0.0, s - shift), std::min(1.0, s + shift), BoundMethod::GlobalLipschitz, epsilon,
          lipschitz_product};
}

ScoreBound bound_tight(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y,
                       double epsilon, double lipschitz_product) {
  check_radius(epsilon, lipschitz_product);
  check_class(logits, y);
  const double radius = lipschitz_product * epsilon;
  ScoreBound out{0.0, 0.0, BoundMethod::TightMonotone, epsilon, lipschitz_product};
  if (spec.kind == ScoreKind::LacSigmoid) {
    const double target = logits[static_cast<std::size_t>(y)];
    out.lower = sigmoid_score(spec, target + radius);
    out.upper = sigmoid_score(spec, target - radius);
  } else {
    out.lower = softmax_score(spec, logits, y, radius, -radius);
    out.upper = softmax_score(spec, logits, y, -radius, radius);
  }
  return out;
}

ScoreBound bound(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y, double epsilon,
                 double lipschitz_product, BoundMethod method) {
  return method == BoundMethod::GlobalLipschitz ? bound_global(spec, logits, y, epsilon, lipschitz_product)
                                                : bound_tight(spec, logits, y, epsilon, lipschitz_product);
}

double bound_one_side(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y, double epsilon,
                      double lipschitz_product, BoundMethod method, BoundSide side) {
  check_radius(epsilon, lipschitz_product);
  check_class(logits, y);
  const bool lower = side == BoundSide::Lower;
  if (method == BoundMethod::GlobalLipschitz) {
    if (spec.kind != ScoreKind::LacSigmoid)
      throw UnsupportedMethodError("global Lipschitz bound is undefined for the LAC softmax score; use the tight method");
    const double s = sigmoid_score(spec, logits[static_cast<std::size_t>(y)]);
    const double shift = lipschitz_product * spec.score_lipschitz() * epsilon;
    return lower ? std::max(0.0, s - shift) : std::min(1.0, s + shift);
  }
  const double radius = lipschitz_product * epsilon;
  if (spec.kind == ScoreKind::LacSigmoid)
    return sigmoid_score(spec, logits[static_cast<std::size_t>(y)] + (lower ? radius : -radius));
  return lower ? softmax_score(spec, logits, y, radius, -radius) : softmax_score(spec, logits, y, -radius, radius);
}

double sigmoid_inverse_threshold(const ScoreSpec& spec, double q) {
  if (spec.kind != ScoreKind::LacSigmoid) throw UnsupportedMethodError("threshold inversion needs a LAC sigmoid score");
  if (!(q > 0.0 && q < 1.0)) throw DomainError("threshold inversion needs q in (0, 1)");
  return spec.bias + spec.temperature * logit(1.0 - q);
}

std::string to_string(ScoreKind kind) { return kind == ScoreKind::LacSigmoid ? "lac_sigmoid" : "lac_softmax"; }

std::string to_string(BoundMethod method) {
  return method == BoundMethod::GlobalLipschitz ? "global" : "tight";
}

ScoreKind score_kind_from_string(const std::string& text) {
  if (text == "lac_sigmoid") return ScoreKind::LacSigmoid;
  if (text == "lac_softmax") return ScoreKind::LacSoftmax;
  throw DomainError("unknown score kind '" + text + "' (expected lac_sigmoid or lac_softmax)");
}

BoundMethod bound_method_from_string(const std::string& text) {
  if (text == "global") return BoundMethod::GlobalLipschitz;
  if (text == "tight") return BoundMethod::TightMonotone;
  throw DomainError("unknown bound method '" + text + "' (expected global or tight)");
}

nlohmann::json to_json(const ScoreSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"temperature", spec.temperature}, {"bias", spec.bias}};
}

ScoreSpec score_spec_from_json(const nlohmann::json& doc) {
  try {
    ScoreSpec spec;
    spec.kind = score_kind_from_string(doc.at("kind").get<std::string>());
    spec.temperature = doc.at("temperature").get<double>();
    spec.bias = doc.value("bias", 0.0);
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed score spec: ") + e.what());
  }
}

}  // namespace liprcp::scores

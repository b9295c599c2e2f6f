#pragma once

#include <span>
#include <string>

#include <Eigen/Dense>
#include "json.hpp"

namespace liprcp::scores {

enum class ScoreKind { LacSigmoid, LacSoftmax };

enum class BoundMethod { GlobalLipschitz, TightMonotone };

/// Non-conformity score configuration.
///
///   LacSigmoid: s(x, y) = 1 - sigmoid((f(x)_y - b) / T)
///   LacSoftmax: s(x, y) = 1 - softmax(f(x) / T)_y
struct ScoreSpec {
  ScoreKind kind = ScoreKind::LacSigmoid;
  double temperature = 1.0;
  double bias = 0.0;

  static ScoreSpec lac_sigmoid(double temperature = 1.0, double bias = 0.0);
  static ScoreSpec lac_softmax(double temperature = 1.0);

  /// Lipschitz constant of the score in the target logit, 1 / (4 T).
  /// Only defined for LacSigmoid.
  double score_lipschitz() const;
  bool has_global_bound() const { return kind == ScoreKind::LacSigmoid; }
  void validate() const;
};

/// Certified range of s(x~, y) over the l2 ball of radius epsilon around x.
struct ScoreBound {
  double lower = 0.0;
  double upper = 0.0;
  BoundMethod method = BoundMethod::TightMonotone;
  double epsilon = 0.0;
  double lipschitz_product = 1.0;
};

double sigmoid(double z);
double logit(double p);

double score(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y);

/// s -/+ L_n L_s epsilon, clipped to [0, 1]. Throws UnsupportedMethodError
/// for LacSoftmax, which has no global constant; use bound_tight.
ScoreBound bound_global(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y,
                        double epsilon, double lipschitz_product);

/// Monotone bounds: the logit vector moves by at most L_n epsilon in l2, hence
/// in every coordinate, and the score is monotone in each logit.
ScoreBound bound_tight(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y,
                       double epsilon, double lipschitz_product);

ScoreBound bound(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y, double epsilon,
                 double lipschitz_product, BoundMethod method);

enum class BoundSide { Lower, Upper };

/// One side of bound(...), evaluated alone so set construction pays for
/// exactly one score evaluation per class.
double bound_one_side(const ScoreSpec& spec, std::span<const double> logits, Eigen::Index y, double epsilon,
                      double lipschitz_product, BoundMethod method, BoundSide side);

/// Logit value t with score(t) == q for LacSigmoid: b + T logit(1 - q).
double sigmoid_inverse_threshold(const ScoreSpec& spec, double q);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::string to_string(ScoreKind kind);
std::string to_string(BoundMethod method);
ScoreKind score_kind_from_string(const std::string& text);
BoundMethod bound_method_from_string(const std::string& text);

nlohmann::json to_json(const ScoreSpec& spec);
ScoreSpec score_spec_from_json(const nlohmann::json& doc);

}  // namespace liprcp::scores

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace liprcp::lipnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// y = W x + b. When `orthogonal` is set the rows of W are orthonormal.
struct AffineLayer {
  Matrix weight;
  Vector bias;
  bool orthogonal = false;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Spectral norm estimate from power iteration. `converged` is false when
/// the iteration budget ran out before the relative tolerance was met; the
/// value is then a lower estimate and must not be used as a certificate.
struct NormEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Affine layers interleaved with GroupSort2 activations. There is no
/// activation after the final (logit) layer. Immutable once built.
class LipschitzClassifier {
 public:
  explicit LipschitzClassifier(std::vector<AffineLayer> layers);

  const std::vector<AffineLayer>& layers() const noexcept { return layers_; }
  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index num_classes() const { return layers_.back().out_dim(); }

  /// Certified product of the per-layer operator norms, L_n.
  double lipschitz_product() const noexcept { return lipschitz_product_; }
  /// False if any non-orthogonal layer's power iteration did not converge.
  bool lipschitz_certified() const noexcept { return certified_; }

 private:
  std::vector<AffineLayer> layers_;
  double lipschitz_product_ = 1.0;
  bool certified_ = true;
};

struct GradientRecord {
  Vector input_gradient;
  Eigen::Index output_index = 0;
};

struct TrainOptions {
  int epochs = 200;
  double learning_rate = 0.05;
  /// Logits are divided by this before the softmax cross-entropy.
  double temperature = 0.25;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

/// Sorts each consecutive disjoint pair ascending. A trailing odd entry is
/// left in place.
void groupsort2(Eigen::Ref<Vector> values);

/// Orthonormal-row matrix from a product of Householder reflectors
/// H(v) = I - 2 v v^T / (v^T v), applied in order and truncated to the first
/// `out_dim` rows.
Matrix householder_product(std::span<const Vector> reflectors, Eigen::Index out_dim);

/// Random orthogonal layer from `in_dim` seeded reflectors; zero bias.
AffineLayer build_orthogonal(Eigen::Index in_dim, Eigen::Index out_dim, std::uint64_t seed);

/// Stack of orthogonal layers with the given widths, widths[0] being the
/// input dimension and widths.back() the number of classes.
LipschitzClassifier make_orthogonal_model(std::span<const Eigen::Index> widths, std::uint64_t seed);

Vector forward(const LipschitzClassifier& model, const Vector& x);
/// Forward pass on the rows of `inputs` (n x d); returns n x c logits.
Matrix forward_rows(const LipschitzClassifier& model, const Matrix& inputs);

/// Power iteration on W^T W from a seeded start vector.
NormEstimate spectral_norm(const Matrix& weight, int max_iterations = 1000,
                           double relative_tolerance = 1e-10, std::uint64_t seed = 0x5eed);

/// Product of per-layer spectral norms; orthogonal layers contribute 1.
NormEstimate lipschitz_constant(const LipschitzClassifier& model);

/// Gradient of logits[class_index] with respect to the input. At GroupSort
/// ties the original order is kept.
GradientRecord input_gradient(const LipschitzClassifier& model, const Vector& x,
                              Eigen::Index class_index);

/// Vector-Jacobian product: gradient of upstream . logits(x) with respect to x.
Vector input_vjp(const LipschitzClassifier& model, const Vector& x, const Vector& upstream);

struct LogitsAndGradient {
  Vector logits;
  Vector input_gradient;
};

/// One forward and one reverse pass: the upstream vector is computed from
/// the logits by `upstream_of`, then pulled back to the input.
LogitsAndGradient logits_and_vjp(const LipschitzClassifier& model, const Vector& x,
                                 const std::function<Vector(const Vector&)>& upstream_of);

/// Max-abs entry of W W^T - I.
double orthogonality_residual(const Matrix& weight);

/// Polar projection by Bjorck iteration until the residual is <= tolerance.
Matrix project_orthogonal(const Matrix& weight, double tolerance = 1e-12, int max_iterations = 200);

/// Mini-batch gradient descent on temperature-scaled cross-entropy. Every
/// orthogonal layer is re-projected after each step.
///
/// Throws TrainingError if the loss becomes non-finite.
LipschitzClassifier train_toy(const LipschitzClassifier& model, const Matrix& inputs,
                              std::span<const int> labels, const TrainOptions& options);

nlohmann::json to_json(const LipschitzClassifier& model);
LipschitzClassifier model_from_json(const nlohmann::json& doc);
void save_model(const LipschitzClassifier& model, const std::filesystem::path& path);
LipschitzClassifier load_model(const std::filesystem::path& path);

}  // namespace liprcp::lipnet

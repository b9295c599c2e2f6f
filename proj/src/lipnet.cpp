#include "liprcp/lipnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "liprcp/error.hpp"
#include "liprcp/rng.hpp"

namespace liprcp::lipnet {
namespace {

constexpr double kOrthogonalLoadTolerance = 1e-9;

// Per-activation record of which pairs were swapped by GroupSort2.
using SwapMask = std::vector<unsigned char>;

void groupsort2_recorded(Eigen::Ref<Vector> values, SwapMask& mask) {
  const Eigen::Index pairs = values.size() / 2;
  mask.assign(static_cast<std::size_t>(pairs), 0);
  for (Eigen::Index p = 0; p < pairs; ++p) {
    double& a = values[2 * p];
    double& b = values[2 * p + 1];
    if (a > b) {
      std::swap(a, b);
      mask[static_cast<std::size_t>(p)] = 1;
    }
  }
}

void unswap(Eigen::Ref<Vector> grad, const SwapMask& mask) {
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p]) std::swap(grad[2 * p], grad[2 * p + 1]);
  }
}

void check_layers(const std::vector<AffineLayer>& layers) {
  if (layers.empty()) throw DimensionError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (layer.in_dim() == 0 || layer.out_dim() == 0)
      throw DimensionError("layer " + std::to_string(i) + " has an empty weight matrix");
    if (layer.bias.size() != layer.out_dim())
      throw DimensionError("layer " + std::to_string(i) + " bias length does not match rows");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw DomainError("layer " + std::to_string(i) + " has non-finite parameters");
    if (i > 0 && layer.in_dim() != layers[i - 1].out_dim())
      throw DimensionError("layer " + std::to_string(i) + " input width " +
                           std::to_string(layer.in_dim()) + " does not match previous output " +
                           std::to_string(layers[i - 1].out_dim()));
    if (layer.orthogonal) {
      if (layer.out_dim() > layer.in_dim())
        throw DimensionError("orthogonal layer " + std::to_string(i) + " has more rows than columns");
      if (orthogonality_residual(layer.weight) > kOrthogonalLoadTolerance)
        throw DomainError("layer " + std::to_string(i) + " is flagged orthogonal but W W^T != I");
    }
  }
}

}  // namespace

LipschitzClassifier::LipschitzClassifier(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
  check_layers(layers_);
  const NormEstimate estimate = lipschitz_constant(*this);
  lipschitz_product_ = estimate.value;
  certified_ = estimate.converged;
}

void groupsort2(Eigen::Ref<Vector> values) {
  for (Eigen::Index p = 0; p + 1 < values.size(); p += 2) {
    if (values[p] > values[p + 1]) std::swap(values[p], values[p + 1]);
  }
}

Matrix householder_product(std::span<const Vector> reflectors, Eigen::Index out_dim) {
  if (reflectors.empty()) throw DimensionError("need at least one reflector");
  const Eigen::Index n = reflectors.front().size();
  if (out_dim < 1 || out_dim > n)
    throw DimensionError("out_dim must lie in [1, in_dim]");
  Matrix q = Matrix::Identity(n, n);
  for (const Vector& v : reflectors) {
    if (v.size() != n) throw DimensionError("reflector length mismatch");
    const double vv = v.squaredNorm();
    if (vv == 0.0) continue;
    // q <- H(v) q
    const Eigen::RowVectorXd vtq = v.transpose() * q;
    q.noalias() -= (2.0 / vv) * v * vtq;
  }
  return q.topRows(out_dim);
}

AffineLayer build_orthogonal(Eigen::Index in_dim, Eigen::Index out_dim, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw DimensionError("layer dimensions must be positive");
  if (out_dim > in_dim)
    throw DimensionError("orthogonal layer needs out_dim <= in_dim (got " + std::to_string(out_dim) +
                         " > " + std::to_string(in_dim) + ")");
  Rng rng = Rng(seed).substream("householder");
  std::vector<Vector> reflectors;
  reflectors.reserve(static_cast<std::size_t>(in_dim));
  for (Eigen::Index r = 0; r < in_dim; ++r) {
    Vector v(in_dim);
    for (Eigen::Index j = 0; j < in_dim; ++j) v[j] = rng.normal();
    reflectors.push_back(std::move(v));
  }
  AffineLayer layer;
  layer.weight = householder_product(reflectors, out_dim);
  layer.bias = Vector::Zero(out_dim);
  layer.orthogonal = true;
  return layer;
}

LipschitzClassifier make_orthogonal_model(std::span<const Eigen::Index> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw DimensionError("need at least an input and an output width");
  std::vector<AffineLayer> layers;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back(build_orthogonal(widths[i], widths[i + 1], rng.substream(i).next_u64()));
  }
  return LipschitzClassifier(std::move(layers));
}

Vector forward(const LipschitzClassifier& model, const Vector& x) {
  if (x.size() != model.input_dim())
    throw DimensionError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(model.input_dim()));
  const auto& layers = model.layers();
  Vector a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vector z = layers[i].weight * a + layers[i].bias;
    if (i + 1 < layers.size()) groupsort2(z);
    a = std::move(z);
  }
  return a;
}

Matrix forward_rows(const LipschitzClassifier& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim())
    throw DimensionError("inputs have " + std::to_string(inputs.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim()));
  const auto& layers = model.layers();
  Matrix a = inputs.transpose();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix z = layers[i].weight * a;
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) groupsort2(z.col(c));
    }
    a = std::move(z);
  }
  return a.transpose();
}

NormEstimate spectral_norm(const Matrix& weight, int max_iterations, double relative_tolerance,
                           std::uint64_t seed) {
  Rng rng(seed);
  Vector v(weight.cols());
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
  v.normalize();
  double lambda = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector u = weight.transpose() * (weight * v);
    const double next = u.norm();
    if (next == 0.0) return {0.0, true, it};
    v = u / next;
    if (std::abs(next - lambda) <= relative_tolerance * next) return {std::sqrt(next), true, it};
    lambda = next;
  }
  return {std::sqrt(lambda), false, max_iterations};
}

NormEstimate lipschitz_constant(const LipschitzClassifier& model) {
  NormEstimate total{1.0, true, 0};
  for (const auto& layer : model.layers()) {
    if (layer.orthogonal) continue;
    const NormEstimate layer_norm = spectral_norm(layer.weight);
    total.value *= layer_norm.value;
    total.converged = total.converged && layer_norm.converged;
    total.iterations += layer_norm.iterations;
  }
  return total;
}

LogitsAndGradient logits_and_vjp(const LipschitzClassifier& model, const Vector& x,
                                 const std::function<Vector(const Vector&)>& upstream_of) {
  if (x.size() != model.input_dim()) throw DimensionError("input dimension mismatch");
  const auto& layers = model.layers();
  std::vector<SwapMask> masks(layers.size());
  Vector a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vector z = layers[i].weight * a + layers[i].bias;
    if (i + 1 < layers.size()) groupsort2_recorded(z, masks[i]);
    a = std::move(z);
  }
  Vector g = upstream_of(a);
  if (g.size() != model.num_classes()) throw DimensionError("upstream length mismatch");
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) unswap(g, masks[i]);
    g = layers[i].weight.transpose() * g;
  }
  return {std::move(a), std::move(g)};
}

Vector input_vjp(const LipschitzClassifier& model, const Vector& x, const Vector& upstream) {
  if (upstream.size() != model.num_classes()) throw DimensionError("upstream length mismatch");
  return logits_and_vjp(model, x, [&](const Vector&) { return upstream; }).input_gradient;
}

GradientRecord input_gradient(const LipschitzClassifier& model, const Vector& x, Eigen::Index class_index) {
  if (class_index < 0 || class_index >= model.num_classes())
    throw DimensionError("class index " + std::to_string(class_index) + " out of range");
  Vector upstream = Vector::Zero(model.num_classes());
  upstream[class_index] = 1.0;
  return {input_vjp(model, x, upstream), class_index};
}

double orthogonality_residual(const Matrix& weight) {
  const Matrix gram = weight * weight.transpose();
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

Matrix project_orthogonal(const Matrix& weight, double tolerance, int max_iterations) {
  Matrix w = weight;
  // Bjorck's iteration converges for singular values in (0, sqrt(3)).
  const double top = spectral_norm(w, 200, 1e-6).value;
  if (top > 1.5) w /= top;
  for (int it = 0; it < max_iterations; ++it) {
    const Matrix gram = w * w.transpose();
    const double residual = (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (residual <= tolerance) return w;
    w = 1.5 * w - 0.5 * gram * w;
  }
  // Rounding can stall the iteration just above a very tight tolerance.
  if (orthogonality_residual(w) > std::max(tolerance, 1e-8))
    throw TrainingError("orthogonal projection did not converge");
  return w;
}

LipschitzClassifier train_toy(const LipschitzClassifier& model, const Matrix& inputs,
                              std::span<const int> labels, const TrainOptions& options) {
  if (options.epochs < 0) throw DomainError("epochs must be non-negative");
  if (options.epochs == 0) return model;
  if (inputs.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DimensionError("inputs and labels have different lengths");
  if (inputs.cols() != model.input_dim()) throw DimensionError("input dimension does not match model");
  if (inputs.rows() == 0) throw DimensionError("empty training set");
  if (!(options.temperature > 0.0)) throw DomainError("training temperature must be positive");
  if (!(options.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (options.batch_size < 1) throw DomainError("batch size must be positive");
  const Eigen::Index classes = model.num_classes();
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DimensionError("label " + std::to_string(y) + " out of range");
  }

  std::vector<AffineLayer> layers = model.layers();
  const std::size_t depth = layers.size();
  const std::size_t n = labels.size();
  Rng rng = Rng(options.seed).substream("trainer");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Matrix> activations(depth + 1);
  std::vector<std::vector<SwapMask>> masks(depth);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(options.batch_size));
      const Eigen::Index batch = static_cast<Eigen::Index>(stop - start);

      activations[0].resize(inputs.cols(), batch);
      for (Eigen::Index b = 0; b < batch; ++b)
        activations[0].col(b) = inputs.row(static_cast<Eigen::Index>(order[start + b])).transpose();

      for (std::size_t l = 0; l < depth; ++l) {
        Matrix z = layers[l].weight * activations[l];
        z.colwise() += layers[l].bias;
        if (l + 1 < depth) {
          masks[l].resize(static_cast<std::size_t>(batch));
          for (Eigen::Index b = 0; b < batch; ++b)
            groupsort2_recorded(z.col(b), masks[l][static_cast<std::size_t>(b)]);
        }
        activations[l + 1] = std::move(z);
      }

      // Softmax cross-entropy on logits / T.
      Matrix delta = activations[depth] / options.temperature;
      for (Eigen::Index b = 0; b < batch; ++b) {
        auto col = delta.col(b);
        const double top = col.maxCoeff();
        const int y = labels[order[start + static_cast<std::size_t>(b)]];
        const double margin = col[y] - top;
        col = (col.array() - top).exp().matrix();
        const double total = col.sum();
        col /= total;
        epoch_loss += std::log(total) - margin;
        col[y] -= 1.0;
      }
      delta /= options.temperature * static_cast<double>(batch);

      for (std::size_t l = depth; l-- > 0;) {
        const Matrix grad_w = delta * activations[l].transpose();
        const Vector grad_b = delta.rowwise().sum();
        if (l > 0) {
          Matrix upstream = layers[l].weight.transpose() * delta;
          for (Eigen::Index b = 0; b < batch; ++b)
            unswap(upstream.col(b), masks[l - 1][static_cast<std::size_t>(b)]);
          delta = std::move(upstream);
        }
        layers[l].weight -= options.learning_rate * grad_w;
        layers[l].bias -= options.learning_rate * grad_b;
        if (layers[l].orthogonal) layers[l].weight = project_orthogonal(layers[l].weight);
      }
    }
    bool finite = std::isfinite(epoch_loss);
    for (const auto& layer : layers) finite = finite && layer.weight.allFinite() && layer.bias.allFinite();
    if (!finite)
      throw TrainingError("loss diverged at epoch " + std::to_string(epoch) +
                          "; lower the learning rate or raise the temperature");
  }
  return LipschitzClassifier(std::move(layers));
}

nlohmann::json to_json(const LipschitzClassifier& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    nlohmann::json weight = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) row.push_back(layer.weight(r, c));
      weight.push_back(std::move(row));
    }
    nlohmann::json bias = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) bias.push_back(layer.bias[r]);
    layers.push_back({{"weight", std::move(weight)}, {"bias", std::move(bias)}, {"orthogonal", layer.orthogonal}});
  }
  return {{"layers", std::move(layers)}, {"activation", "groupsort2"}};
}

LipschitzClassifier model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("activation").get<std::string>() != "groupsort2")
      throw DomainError("unsupported activation '" + doc.at("activation").get<std::string>() + "'");
    std::vector<AffineLayer> layers;
    for (const auto& entry : doc.at("layers")) {
      const auto& rows = entry.at("weight");
      const auto& bias = entry.at("bias");
      AffineLayer layer;
      const Eigen::Index out = static_cast<Eigen::Index>(rows.size());
      const Eigen::Index in = out > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
      layer.weight.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r) {
        if (static_cast<Eigen::Index>(rows.at(r).size()) != in) throw DimensionError("ragged weight matrix");
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rows.at(r).at(c).get<double>();
      }
      layer.bias.resize(static_cast<Eigen::Index>(bias.size()));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = bias.at(r).get<double>();
      layer.orthogonal = entry.at("orthogonal").get<bool>();
      layers.push_back(std::move(layer));
    }
    return LipschitzClassifier(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed model document: ") + e.what());
  }
}

void save_model(const LipschitzClassifier& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json(model).dump(1) << '\n';
}

LipschitzClassifier load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("model file " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace liprcp::lipnet

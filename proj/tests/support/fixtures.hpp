#pragma once

// Shared models and samplers for the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "liprcp/datasets.hpp"
#include "liprcp/lipnet.hpp"
#include "liprcp/rng.hpp"

namespace fixtures {

using liprcp::lipnet::LipschitzClassifier;

// The reference desk-scale task: 4-class Gaussian mixture in 16 dimensions.
constexpr Eigen::Index kDim = 16;
constexpr int kClasses = 4;
constexpr double kSeparation = 4.0;

inline liprcp::datasets::LabeledDataset task_data(std::size_t n, std::uint64_t seed) {
  return liprcp::datasets::make_gaussian_mixture(n, kDim, kClasses, kSeparation, seed);
}

// Orthogonal 16-16-16-4 GroupSort network trained on 4000 draws. Built once.
inline const LipschitzClassifier& trained_model() {
  static const LipschitzClassifier model = [] {
    const auto train = task_data(4000, 1001);
    const std::vector<Eigen::Index> widths{kDim, 16, 16, kClasses};
    const auto init = liprcp::lipnet::make_orthogonal_model(widths, 1002);
    liprcp::lipnet::TrainOptions opt;
    opt.epochs = 30;
    opt.seed = 1003;
    return liprcp::lipnet::train_toy(init, train.values, train.labels, opt);
  }();
  return model;
}

// Layers with unconstrained Gaussian weights (scaled by `scale`).
inline LipschitzClassifier dense_model(const std::vector<Eigen::Index>& widths, liprcp::Rng& rng,
                                       double scale = 1.0) {
  std::vector<liprcp::lipnet::AffineLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    liprcp::lipnet::AffineLayer layer;
    layer.weight.resize(widths[i + 1], widths[i]);
    layer.bias.resize(widths[i + 1]);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = scale * rng.normal();
      layer.bias[r] = rng.normal();
    }
    layers.push_back(std::move(layer));
  }
  return LipschitzClassifier(std::move(layers));
}

// Orthogonal layers with random biases.
inline LipschitzClassifier orthogonal_model(const std::vector<Eigen::Index>& widths, liprcp::Rng& rng) {
  auto base = liprcp::lipnet::make_orthogonal_model(widths, rng.next_u64());
  auto layers = base.layers();
  for (auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = rng.normal();
  }
  return LipschitzClassifier(std::move(layers));
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index d, liprcp::Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = scale * rng.normal();
  return v;
}

// Uniform point of the closed l2 ball, or of its boundary sphere.
inline Eigen::VectorXd ball_point(const Eigen::VectorXd& center, double radius, liprcp::Rng& rng, bool surface) {
  Eigen::VectorXd dir = gaussian_vector(center.size(), rng);
  dir.normalize();
  const double r = surface ? radius : radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(center.size()));
  return center + r * dir;
}

inline Eigen::VectorXd row(const Eigen::MatrixXd& m, std::size_t i) {
  return m.row(static_cast<Eigen::Index>(i)).transpose();
}

// Smallest |a - b| over all GroupSort pairs of a forward pass. Finite
// differences are only meaningful when this is well above the step.
inline double min_pair_gap(const LipschitzClassifier& model, const Eigen::VectorXd& x) {
  double gap = INFINITY;
  Eigen::VectorXd a = x;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::VectorXd z = layers[i].weight * a + layers[i].bias;
    if (i + 1 < layers.size()) {
      for (Eigen::Index p = 0; p + 1 < z.size(); p += 2) gap = std::min(gap, std::abs(z[p] - z[p + 1]));
      liprcp::lipnet::groupsort2(z);
    }
    a = std::move(z);
  }
  return gap;
}

// Central differences of logits[y], step h.
inline Eigen::VectorXd fd_gradient(const LipschitzClassifier& model, const Eigen::VectorXd& x, Eigen::Index y,
                                   double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd up = x, down = x;
    up[j] += h;
    down[j] -= h;
    g[j] = (liprcp::lipnet::forward(model, up)[y] - liprcp::lipnet::forward(model, down)[y]) / (2.0 * h);
  }
  return g;
}

}  // namespace fixtures

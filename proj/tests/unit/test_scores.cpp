#include "doctest.h"

#include <cmath>
#include <optional>
#include <vector>

#include "../support/fixtures.hpp"
#include "liprcp/error.hpp"
#include "liprcp/scores.hpp"

using namespace liprcp;
using namespace liprcp::scores;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> v(std::initializer_list<double> xs) { return xs; }

}  // namespace

TEST_CASE("LAC scores") {
  const auto spec = ScoreSpec::lac_sigmoid(2.5, 0.7);
  CHECK(score(spec, v({0.0, 0.7}), 1) == 0.5);
  CHECK(score(ScoreSpec::lac_sigmoid(), v({std::log(3.0)}), 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(score(ScoreSpec::lac_softmax(), v({1.3, 1.3}), 0) == 0.5);
  CHECK(score(ScoreSpec::lac_softmax(0.5), v({0.0, std::log(3.0) / 2.0}), 1) == doctest::Approx(0.25));
  CHECK_THROWS_AS(score(spec, v({0.0, 1.0}), 2), DimensionError);
  CHECK_THROWS_AS(score(spec, v({0.0, 1.0}), -1), DimensionError);

  // Stable in the tails: no 1 - 1 cancellation.
  CHECK(score(ScoreSpec::lac_sigmoid(), v({50.0}), 0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));
  CHECK(score(ScoreSpec::lac_softmax(), v({40.0, 0.0}), 0) == doctest::Approx(std::exp(-40.0)).epsilon(1e-12));
}

TEST_CASE("score spec validation") {
  CHECK_THROWS_AS(ScoreSpec::lac_sigmoid(0.0), DomainError);
  CHECK_THROWS_AS(ScoreSpec::lac_softmax(-1.0), DomainError);
  CHECK(ScoreSpec::lac_sigmoid(0.25).score_lipschitz() == 1.0);
  CHECK(ScoreSpec::lac_sigmoid(1.0).score_lipschitz() == 0.25);
  CHECK_THROWS_AS(ScoreSpec::lac_softmax().score_lipschitz(), UnsupportedMethodError);
}

TEST_CASE("global bound") {
  const auto spec = ScoreSpec::lac_sigmoid();
  const auto b = bound_global(spec, v({0.0}), 0, 0.2, 1.0);
  CHECK(b.lower == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(b.upper == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(b.method == BoundMethod::GlobalLipschitz);

  const auto zero = bound_global(spec, v({1.2}), 0, 0.0, 3.0);
  CHECK(zero.lower == score(spec, v({1.2}), 0));
  CHECK(zero.upper == zero.lower);

  const auto clipped = bound_global(spec, v({0.0}), 0, 10.0, 1.0);
  CHECK(clipped.lower == 0.0);
  CHECK(clipped.upper == 1.0);

  CHECK_THROWS_AS(bound_global(ScoreSpec::lac_softmax(), v({0.0, 1.0}), 0, 0.1, 1.0), UnsupportedMethodError);
  CHECK_THROWS_AS(bound_global(spec, v({0.0}), 0, -0.1, 1.0), DomainError);
}

TEST_CASE("tight bound") {
  const auto spec = ScoreSpec::lac_sigmoid();
  const auto t = bound_tight(spec, v({0.0}), 0, 1.0, 1.0);
  CHECK(t.lower == doctest::Approx(1.0 - sig(1.0)).epsilon(1e-15));
  CHECK(t.lower == doctest::Approx(0.2689414213699951));
  CHECK(t.upper == doctest::Approx(1.0 - sig(-1.0)).epsilon(1e-15));
  CHECK(bound_global(spec, v({0.0}), 0, 1.0, 1.0).lower == 0.25);
  CHECK(t.lower >= 0.25);

  for (const auto& s : {ScoreSpec::lac_sigmoid(0.7, 0.3), ScoreSpec::lac_softmax(0.7)}) {
    const auto logits = v({0.4, -1.1, 2.0});
    for (Eigen::Index y = 0; y < 3; ++y) {
      const auto b = bound_tight(s, logits, y, 0.0, 1.0);
      CHECK(b.lower == score(s, logits, y));
      CHECK(b.upper == score(s, logits, y));
    }
  }

  // Softmax corner: target logit up by L*eps, the others down.
  const auto sm = ScoreSpec::lac_softmax();
  const auto b = bound_tight(sm, v({1.0, 0.0, -1.0}), 0, 0.5, 2.0);
  CHECK(b.lower == doctest::Approx(score(sm, v({2.0, -1.0, -2.0}), 0)).epsilon(1e-14));
  CHECK(b.upper == doctest::Approx(score(sm, v({0.0, 1.0, 0.0}), 0)).epsilon(1e-14));
}

TEST_CASE("one-sided bound matches the pair") {
  Rng rng(21);
  for (int t = 0; t < 500; ++t) {
    const auto logits = fixtures::gaussian_vector(4, rng, 3.0);
    const auto span = as_span(logits);
    const double eps = rng.uniform();
    const double lip = 0.5 + rng.uniform();
    const Eigen::Index y = t % 4;
    for (const auto& spec : {ScoreSpec::lac_sigmoid(0.5, 0.2), ScoreSpec::lac_softmax(0.8)}) {
      for (auto method : {BoundMethod::GlobalLipschitz, BoundMethod::TightMonotone}) {
        if (!spec.has_global_bound() && method == BoundMethod::GlobalLipschitz) continue;
        const auto b = bound(spec, span, y, eps, lip, method);
        CHECK(bound_one_side(spec, span, y, eps, lip, method, BoundSide::Lower) == b.lower);
        CHECK(bound_one_side(spec, span, y, eps, lip, method, BoundSide::Upper) == b.upper);
      }
    }
  }
}

TEST_CASE("bounds hold on sampled ball points") {
  Rng rng(22);
  const std::vector<ScoreSpec> specs{ScoreSpec::lac_sigmoid(), ScoreSpec::lac_sigmoid(0.3, -0.5),
                                     ScoreSpec::lac_softmax(), ScoreSpec::lac_softmax(0.4)};
  for (int t = 0; t < 200; ++t) {
    const auto model = fixtures::dense_model({4, 6, 6, 3}, rng, 0.6);
    const auto x = fixtures::gaussian_vector(4, rng);
    const Eigen::VectorXd logits = lipnet::forward(model, x);
    const double eps = rng.uniform();
    const Eigen::Index y = t % 3;
    const auto& spec = specs[static_cast<std::size_t>(t) % specs.size()];
    const auto tight = bound_tight(spec, as_span(logits), y, eps, model.lipschitz_product());
    std::optional<ScoreBound> global;
    if (spec.has_global_bound()) global = bound_global(spec, as_span(logits), y, eps, model.lipschitz_product());
    for (int k = 0; k < 200; ++k) {
      const Eigen::VectorXd moved = lipnet::forward(model, fixtures::ball_point(x, eps, rng, k % 2 == 0));
      const double s = score(spec, as_span(moved), y);
      CHECK(tight.lower <= s);
      CHECK(s <= tight.upper);
      if (global) {
        CHECK(global->lower <= s);
        CHECK(s <= global->upper);
      }
    }
  }
}

TEST_CASE("tight sigmoid bounds dominate the global ones") {
  Rng rng(23);
  for (int t = 0; t < 2000; ++t) {
    const auto spec = ScoreSpec::lac_sigmoid(0.2 + 2.0 * rng.uniform(), rng.normal());
    const std::vector<double> logits{2.0 * rng.normal()};
    const double eps = 0.01 + rng.uniform();
    const double lip = 0.5 + rng.uniform();
    const auto tight = bound_tight(spec, logits, 0, eps, lip);
    const auto global = bound_global(spec, logits, 0, eps, lip);
    CHECK(tight.lower > global.lower);
    CHECK(tight.upper < global.upper);
  }
}

TEST_CASE("bounds are monotone in epsilon") {
  Rng rng(24);
  for (const auto& spec : {ScoreSpec::lac_sigmoid(0.5), ScoreSpec::lac_softmax(0.5)}) {
    const auto logits = fixtures::gaussian_vector(3, rng);
    double lo = 1.0, hi = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const auto b = bound_tight(spec, as_span(logits), 1, 0.02 * k, 1.0);
      CHECK(b.lower <= lo);
      CHECK(b.upper >= hi);
      lo = b.lower;
      hi = b.upper;
    }
  }
}

TEST_CASE("sigmoid threshold inversion") {
  CHECK(sigmoid_inverse_threshold(ScoreSpec::lac_sigmoid(), 0.5) == 0.0);
  CHECK(sigmoid_inverse_threshold(ScoreSpec::lac_sigmoid(), 0.25) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  Rng rng(25);
  for (int t = 0; t < 1000; ++t) {
    const auto spec = ScoreSpec::lac_sigmoid(0.1 + rng.uniform(), rng.normal());
    const double q = 0.001 + 0.998 * rng.uniform();
    const double thr = sigmoid_inverse_threshold(spec, q);
    CHECK(std::abs(score(spec, std::vector<double>{thr}, 0) - q) <= 1e-12);
  }
  CHECK_THROWS_AS(sigmoid_inverse_threshold(ScoreSpec::lac_sigmoid(), 0.0), DomainError);
  CHECK_THROWS_AS(sigmoid_inverse_threshold(ScoreSpec::lac_sigmoid(), 1.0), DomainError);
  CHECK_THROWS_AS(sigmoid_inverse_threshold(ScoreSpec::lac_softmax(), 0.5), UnsupportedMethodError);
}

TEST_CASE("score spec serialisation") {
  const auto spec = ScoreSpec::lac_sigmoid(0.37, -1.25);
  const auto back = score_spec_from_json(to_json(spec));
  CHECK(back.kind == spec.kind);
  CHECK(back.temperature == spec.temperature);
  CHECK(back.bias == spec.bias);
  CHECK(to_json(ScoreSpec::lac_softmax()).at("kind") == "lac_softmax");
  CHECK(bound_method_from_string(to_string(BoundMethod::GlobalLipschitz)) == BoundMethod::GlobalLipschitz);
  CHECK_THROWS_AS(score_kind_from_string("aps"), DomainError);
  CHECK_THROWS_AS(score_spec_from_json(nlohmann::json{{"kind", "lac_sigmoid"}, {"temperature", -1.0}}), DomainError);
}

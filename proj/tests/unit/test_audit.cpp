#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "../oracles/mpfr_binomial.hpp"
#include "../support/fixtures.hpp"
#include "liprcp/audit.hpp"
#include "liprcp/binomial.hpp"
#include "liprcp/error.hpp"
#include "liprcp/robust.hpp"

using namespace liprcp;
using namespace liprcp::audit;
using scores::BoundMethod;
using scores::ScoreSpec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

conformal::CalibrationRecord record(double q, ScoreSpec spec, double lip) {
  conformal::CalibrationRecord rec;
  rec.q_alpha = q;
  rec.score_spec = spec;
  rec.lipschitz_product = lip;
  return rec;
}

}  // namespace

TEST_CASE("binomial CDF closed forms") {
  CHECK(binomial_cdf(10, 0.5, 10) == 1.0);
  CHECK(binomial_cdf(10, 0.0, 0) == 1.0);
  CHECK(binomial_cdf(10, 1.0, 9) == 0.0);
  CHECK(binomial_cdf(10, 0.5, 0) == doctest::Approx(std::ldexp(1.0, -10)).epsilon(1e-14));
  CHECK(binomial_cdf(4, 0.5, 1) == doctest::Approx(5.0 / 16.0).epsilon(1e-14));
  CHECK(binomial_cdf(3, 0.2, 2) == doctest::Approx(1.0 - 0.008).epsilon(1e-14));
  CHECK(binomial_cdf(2, 0.5, 1) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(binomial_cdf(3, 0.5, 0) == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("binomial CDF against the 200-bit oracle") {
  Rng rng(51);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 1 + rng.uniform_index(t < 200 ? 2000 : 100000);
    const double p = rng.uniform();
    const std::size_t k = rng.uniform_index(m + 1);
    const double got = binomial_cdf(m, p, k);
    const double want = oracle::binomial_cdf_mp(m, p, k);
    CHECK(std::abs(got - want) <= 1e-12 + 1e-9 * want);
  }
}

TEST_CASE("covmax_plus closed forms and oracle") {
  // F_{m,p}(m) = 1 for every p, so the supremum is 1.
  CHECK(covmax_plus(50, 50, 0.05) == 1.0);
  // F_{m,p}(0) = (1 - p)^m >= delta  <=>  p <= 1 - delta^(1/m).
  for (std::size_t m : {1u, 7u, 100u, 5000u}) {
    const double want = 1.0 - std::pow(0.05, 1.0 / static_cast<double>(m));
    CHECK(std::abs(covmax_plus(m, 0, 0.05) - want) <= 1e-10);
  }
  Rng rng(52);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 2 + rng.uniform_index(3000);
    const std::size_t count = rng.uniform_index(m + 1);
    const double delta = std::pow(10.0, -6.0 * rng.uniform());
    CHECK(std::abs(covmax_plus(m, count, delta) - oracle::covmax_plus_mp(m, count, delta)) <= 1e-8);
  }
  CHECK(covmin_minus(30, 0, 0.1) == doctest::Approx(1.0 - covmax_plus(30, 0, 0.1)));
}

TEST_CASE("binomial table agrees with direct inversion") {
  const BinomialBoundTable table(60, 0.01);
  for (std::size_t c = 0; c <= 60; ++c) {
    CHECK(table.upper(c) == covmax_plus(60, c, 0.01));
    CHECK(table.lower_from_misses(c) == covmin_minus(60, c, 0.01));
  }
}

TEST_CASE("step curve continuity") {
  const StepCurve right({1.0, 2.0}, {0.1, 0.5, 0.9}, Continuity::RightContinuous);
  CHECK(right(0.0) == 0.1);
  CHECK(right(1.0) == 0.5);
  CHECK(right(1.5) == 0.5);
  CHECK(right(2.0) == 0.9);
  const StepCurve left({1.0, 2.0}, {0.9, 0.5, 0.1}, Continuity::LeftContinuous);
  CHECK(left(1.0) == 0.9);
  CHECK(left(std::nextafter(1.0, 2.0)) == 0.5);
  CHECK(left(2.0) == 0.5);
  CHECK(left(3.0) == 0.1);
  CHECK_THROWS_AS(StepCurve({2.0, 1.0}, {0, 0, 0}, Continuity::RightContinuous), DomainError);
  CHECK_THROWS_AS(StepCurve({1.0}, {0.0}, Continuity::RightContinuous), DimensionError);
}

TEST_CASE("global critical radii") {
  const auto rec = record(0.5, ScoreSpec::lac_sigmoid(0.5), 2.0);  // rate L_n L_s = 1
  const std::vector<double> s{0.2, 0.5, 0.9};
  const auto crit = critical_epsilons(rec, s);
  CHECK(crit.entry[0] == 0.0);
  CHECK(crit.exit[0] == doctest::Approx(0.3));
  CHECK(crit.entry[1] == 0.0);
  CHECK(crit.exit[1] == 0.0);
  CHECK(crit.entry[2] == doctest::Approx(0.4));
  CHECK(crit.exit[2] == -kInf);
}

TEST_CASE("critical radii match a direct reconstruction") {
  // Membership of the true label in the conservative/restrictive sets, on a
  // grid, has to agree with entry <= eps and eps <= exit.
  Rng rng(53);
  for (auto spec : {ScoreSpec::lac_sigmoid(0.5), ScoreSpec::lac_softmax(0.5)}) {
    for (auto method : {BoundMethod::TightMonotone, BoundMethod::GlobalLipschitz}) {
      if (method == BoundMethod::GlobalLipschitz && !spec.has_global_bound()) continue;
      const auto rec = record(0.3 + 0.4 * rng.uniform(), spec, 1.5);
      const std::size_t m = 200;
      Eigen::MatrixXd logits(m, 4);
      std::vector<int> labels(m);
      for (std::size_t i = 0; i < m; ++i) {
        logits.row(static_cast<Eigen::Index>(i)) = fixtures::gaussian_vector(4, rng, 2.0).transpose();
        labels[i] = static_cast<int>(rng.uniform_index(4));
      }
      const auto crit = critical_epsilons(rec, logits, labels, method);
      REQUIRE(crit.size() == m);
      for (std::size_t i = 0; i < m; ++i) {
        const Eigen::VectorXd row = fixtures::row(logits, i);
        for (int g = 0; g < 100; ++g) {
          const double eps = 0.03 * g;
          // Skip radii within bisection tolerance of a critical value.
          if (std::abs(eps - crit.entry[i]) < 1e-9 || std::abs(eps - crit.exit[i]) < 1e-9) continue;
          const bool in_cons = robust::conservative_set(rec, scores::as_span(row), eps, method).contains(labels[i]);
          const bool in_restr = robust::restrictive_set(rec, scores::as_span(row), eps, method).contains(labels[i]);
          CHECK(in_cons == (crit.entry[i] <= eps));
          CHECK(in_restr == (eps <= crit.exit[i]));
        }
      }
    }
  }
}

TEST_CASE("tight sigmoid audit falls back outside (0, 1)") {
  const auto rec = record(1.0, ScoreSpec::lac_sigmoid(), 1.0);
  Eigen::MatrixXd logits(2, 2);
  logits << 0.0, 1.0, 2.0, -1.0;
  const std::vector<int> labels{0, 1};
  const auto crit = critical_epsilons(rec, logits, labels, BoundMethod::TightMonotone);
  CHECK(crit.warnings.size() == 1);
  CHECK(crit.exit[0] == kInf);
}

TEST_CASE("coverage curves count entry and exit radii") {
  CriticalEpsilons crit;
  crit.entry = {0.0, 0.0, 0.5, 1.0, kInf};
  crit.exit = {0.2, kInf, -kInf, -kInf, -kInf};
  const auto c = coverage_curves(crit);
  CHECK(c.m == 5);
  CHECK(c.covmax(0.0) == doctest::Approx(0.4));
  CHECK(c.covmax(0.5) == doctest::Approx(0.6));
  CHECK(c.covmax(0.99) == doctest::Approx(0.6));
  CHECK(c.covmax(1.0) == doctest::Approx(0.8));
  CHECK(c.covmax(1e9) == doctest::Approx(0.8));
  CHECK(c.covmin(0.0) == doctest::Approx(0.4));
  CHECK(c.covmin(0.2) == doctest::Approx(0.4));
  CHECK(c.covmin(0.21) == doctest::Approx(0.2));
  CHECK(breakpoint_grid(c) == std::vector<double>{0.0, 0.2, 0.5, 1.0});
}

TEST_CASE("band sandwiches the empirical curves") {
  Rng rng(54);
  const auto rec = record(0.4, ScoreSpec::lac_sigmoid(0.5), 1.0);
  std::vector<double> s(400);
  for (double& x : s) x = rng.uniform();
  const auto curves = coverage_curves(critical_epsilons(rec, s));
  for (auto mode : {CorrectionMode::Corrected, CorrectionMode::Raw}) {
    const auto band = certified_band(curves, 0.1, mode);
    CHECK(band.delta_prime == doctest::Approx(0.1 / 798.0));
    const auto rows = audit_rows(curves, band);
    CHECK(rows.size() == breakpoint_grid(curves).size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      CHECK(r.covmin_minus <= r.covmin_emp);
      CHECK(r.covmin_emp <= r.covmax_emp);
      CHECK(r.covmax_emp <= r.covmax_plus);
      if (i > 0) {
        CHECK(r.covmax_plus >= rows[i - 1].covmax_plus);
        CHECK(r.covmin_minus <= rows[i - 1].covmin_minus);
      }
    }
  }
  const auto corrected = certified_band(curves, 0.1, CorrectionMode::Corrected);
  const auto raw = certified_band(curves, 0.1, CorrectionMode::Raw);
  CHECK(corrected.upper(0.0) == doctest::Approx(std::min(1.0, raw.upper(0.0) + 1.0 / 400.0)));
  CHECK(corrected.lower(0.0) == doctest::Approx(std::max(0.0, raw.lower(0.0) - 1.0 / 400.0)));

  CHECK_THROWS_AS(certified_band(curves, 0.0), DomainError);
  CriticalEpsilons one;
  one.entry = {0.0};
  one.exit = {1.0};
  CHECK_THROWS_AS(certified_band(one, 0.1), DomainError);
  CHECK_THROWS_AS(BandBuilder(300, 0.1, CorrectionMode::Raw).build(curves), DimensionError);
}

TEST_CASE("audit CSV and sidecar") {
  const auto rec = record(0.4, ScoreSpec::lac_sigmoid(0.5), 1.0);
  const std::vector<double> s{0.1, 0.3, 0.5, 0.7};
  const auto curves = coverage_curves(critical_epsilons(rec, s));
  const auto band = certified_band(curves, 0.2);
  const std::vector<double> grid{0.0, 0.1};
  const auto rows = audit_rows(curves, band, grid);
  CHECK(rows.size() == 2);
  const auto path = std::filesystem::temp_directory_path() / "liprcp_audit_test.csv";
  write_audit_csv(rows, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epsilon,covmin_minus,covmin_emp,covmax_emp,covmax_plus");
  std::filesystem::remove(path);
  const auto side = band_sidecar(band, rec);
  CHECK(side.at("m") == 4);
  CHECK(side.at("correction_mode") == "corrected");
  CHECK(correction_mode_from_string("raw") == CorrectionMode::Raw);
  CHECK_THROWS_AS(correction_mode_from_string("uncorrected"), DomainError);
}

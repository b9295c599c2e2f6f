#include "liprcp/binomial.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "liprcp/error.hpp"
#include "liprcp/parallel.hpp"

namespace liprcp::audit {
namespace {

constexpr double kBisectionWidth = 1e-13;
constexpr int kMaxBisections = 100;

// log(n!) - log(sqrt(2 pi n) (n/e)^n).
double stirling_error(double n) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  if (n <= 15.0) {
    return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  const double nn = n * n;
  if (n > 500.0) return (s0 - s1 / nn) / n;
  if (n > 80.0) return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35.0) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x log(x / np) + np - x, accurate when x is close to np.
double deviance_term(double x, double np) {
  if (std::abs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double next = s + ej / (2 * j + 1);
      if (next == s) return next;
      s = next;
    }
  }
  return x * std::log(x / np) + np - x;
}

void check_args(std::size_t m, double p, std::size_t k) {
  if (k > m) throw DomainError("binomial count exceeds trials");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binomial probability outside [0, 1]");
}

}  // namespace

double binomial_log_pmf(std::size_t m, double p, std::size_t k) {
  check_args(m, p, k);
  const double q = 1.0 - p;
  const double n = static_cast<double>(m);
  const double x = static_cast<double>(k);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (p == 0.0) return k == 0 ? 0.0 : neg_inf;
  if (q == 0.0) return k == m ? 0.0 : neg_inf;
  if (k == 0) return m == 0 ? 0.0 : (p < 0.1 ? -deviance_term(n, n * q) - n * p : n * std::log1p(-p));
  if (k == m) return q < 0.1 ? -deviance_term(n, n * p) - n * q : n * std::log(p);
  const double lc = stirling_error(n) - stirling_error(x) - stirling_error(n - x) - deviance_term(x, n * p) -
                    deviance_term(n - x, n * q);
  const double lf = std::log(2.0 * std::numbers::pi) + std::log(x) + std::log1p(-x / n);
  return lc - 0.5 * lf;
}

double binomial_cdf(std::size_t m, double p, std::size_t k) {
  check_args(m, p, k);
  if (k == m) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;
  const double ratio = p / (1.0 - p);  // pmf(j + 1) / pmf(j) = ratio (m - j) / (j + 1)
  const double mode = std::floor((static_cast<double>(m) + 1.0) * p);
  if (static_cast<double>(k) < mode) {
    // Lower tail: terms decrease from j = k downward.
    double term = std::exp(binomial_log_pmf(m, p, k));
    double sum = term;
    for (std::size_t j = k; j > 0 && term > 0.0; --j) {
      term *= static_cast<double>(j) / (static_cast<double>(m - j + 1) * ratio);
      const double next = sum + term;
      if (next == sum) break;
      sum = next;
    }
    return std::min(1.0, sum);
  }
  // Upper tail: terms decrease from j = k + 1 upward.
  double term = std::exp(binomial_log_pmf(m, p, k + 1));
  double sum = term;
  for (std::size_t j = k + 1; j < m && term > 0.0; ++j) {
    term *= ratio * static_cast<double>(m - j) / static_cast<double>(j + 1);
    const double next = sum + term;
    if (next == sum) break;
    sum = next;
  }
  return std::max(0.0, 1.0 - sum);
}

double covmax_plus(std::size_t m, std::size_t count, double delta) {
  if (m == 0) throw DomainError("binomial inversion needs m >= 1");
  if (count > m) throw DomainError("count exceeds m");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (count == m) return 1.0;
  // F_{m,0}(count) = 1 >= delta and F_{m,1}(count) = 0 < delta.
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < kMaxBisections && hi - lo > kBisectionWidth; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_cdf(m, mid, count) >= delta)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

double covmin_minus(std::size_t m, std::size_t miss_count, double delta) {
  return 1.0 - covmax_plus(m, miss_count, delta);
}

BinomialBoundTable::BinomialBoundTable(std::size_t m, double delta) : m_(m), delta_(delta), upper_(m + 1) {
  if (m == 0) throw DomainError("binomial inversion needs m >= 1");
  parallel_for(m + 1, [&](std::size_t count) { upper_[count] = covmax_plus(m, count, delta); });
}

}  // namespace liprcp::audit

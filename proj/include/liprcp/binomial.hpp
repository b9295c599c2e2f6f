#pragma once

#include <cstddef>
#include <vector>

namespace liprcp::audit {

/// P(Binomial(m, p) <= k).
///
/// The probability mass at the tail boundary is evaluated with Loader's
/// saddle-point expansion (accurate to a few ulps for any m), then the tail
/// that does not contain the mode is summed outward by the pmf recurrence
/// until terms no longer change the sum.
double binomial_cdf(std::size_t m, double p, std::size_t k);

/// log P(Binomial(m, p) == k).
double binomial_log_pmf(std::size_t m, double p, std::size_t k);

/// max{p in [0, 1] : F_{m,p}(count) >= delta}, found by bisection on the
/// non-increasing map p -> F_{m,p}(count). The returned value is the upper
/// end of the final bracket, so it never understates the maximiser by more
/// than the bracket width.
double covmax_plus(std::size_t m, std::size_t count, double delta);

/// 1 - max{p : F_{m,p}(miss_count) >= delta}.
double covmin_minus(std::size_t m, std::size_t miss_count, double delta);

/// covmax_plus(m, count, delta) for every count in [0, m], computed once.
class BinomialBoundTable {
 public:
  BinomialBoundTable(std::size_t m, double delta);

  std::size_t m() const noexcept { return m_; }
  double delta() const noexcept { return delta_; }
  /// covmax_plus(m, count, delta).
  double upper(std::size_t count) const { return upper_.at(count); }
  /// covmin_minus(m, miss_count, delta).
  double lower_from_misses(std::size_t miss_count) const { return 1.0 - upper_.at(miss_count); }

 private:
  std::size_t m_;
  double delta_;
  std::vector<double> upper_;
};

}  // namespace liprcp::audit

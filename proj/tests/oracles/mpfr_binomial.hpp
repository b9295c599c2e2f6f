#pragma once

#include <cstddef>

namespace oracle {

// Binomial(m, p) CDF at k, summed term by term in 200-bit arithmetic.
double binomial_cdf_mp(std::size_t m, double p, std::size_t k);

// max{p : F_{m,p}(count) >= delta} by 200-bit bisection (bracket width 2^-90).
double covmax_plus_mp(std::size_t m, std::size_t count, double delta);

}  // namespace oracle

#pragma once

// Exhaustive search over every admissible poisoning of a small calibration
// set: at most k indices, each moved by -delta, 0 or +delta.

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace oracle {

// (min, max) of the rank-r order statistic (1-based) over all poisonings.
inline std::pair<double, double> exhaustive_quantile_range(const std::vector<double>& scores, std::size_t r,
                                                           std::size_t k, double delta, bool clip) {
  const std::size_t n = scores.size();
  std::vector<int> shift(n, -1);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  std::vector<double> work(n);
  // Odometer over {-1, 0, +1}^n, skipping assignments with more than k moves.
  while (true) {
    std::size_t moved = 0;
    for (int s : shift) moved += s != 0 ? 1 : 0;
    if (moved <= k) {
      for (std::size_t i = 0; i < n; ++i) {
        double v = scores[i];
        if (shift[i] > 0) v = v + delta;
        if (shift[i] < 0) v = v - delta;
        if (clip) v = std::clamp(v, 0.0, 1.0);
        work[i] = v;
      }
      std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(r - 1), work.end());
      const double q = work[r - 1];
      if (first || q < lo) lo = q;
      if (first || q > hi) hi = q;
      first = false;
    }
    std::size_t i = 0;
    while (i < n && shift[i] == 1) shift[i++] = -1;
    if (i == n) break;
    ++shift[i];
  }
  return {lo, hi};
}

}  // namespace oracle

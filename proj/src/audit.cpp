#include "liprcp/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "liprcp/error.hpp"

namespace liprcp::audit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smallest radius at which the monotone predicate `member` holds, given it
// fails at 0. Returns +inf if it never holds within a huge radius.
template <typename Predicate>
double first_radius_where(Predicate member) {
  double hi = 1e-3;
  while (!member(hi)) {
    hi *= 2.0;
    if (hi > 1e12) return kInf;
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (member(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// Largest radius at which `member` still holds, given it holds at 0.
template <typename Predicate>
double last_radius_where(Predicate member) {
  double hi = 1e-3;
  while (member(hi)) {
    hi *= 2.0;
    if (hi > 1e12) return kInf;
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (member(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::size_t checked_band_size(std::size_t m, double delta) {
  if (m < 2) throw DomainError("a certified band needs m >= 2 evaluation samples");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  return m;
}

void check_record(const conformal::CalibrationRecord& cal) {
  if (!(cal.lipschitz_product >= 0.0)) throw DomainError("Lipschitz product must be >= 0");
}

}  // namespace

StepCurve::StepCurve(std::vector<double> breakpoints, std::vector<double> values, Continuity continuity)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)), continuity_(continuity) {
  if (values_.size() != breakpoints_.size() + 1)
    throw DimensionError("step curve needs exactly one more value than breakpoints");
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i] >= 0.0) || !std::isfinite(breakpoints_[i]))
      throw DomainError("step curve breakpoints must be finite and >= 0");
    if (i > 0 && !(breakpoints_[i] > breakpoints_[i - 1]))
      throw DomainError("step curve breakpoints must be strictly increasing");
  }
}

double StepCurve::operator()(double epsilon) const {
  const auto it = continuity_ == Continuity::RightContinuous
                      ? std::upper_bound(breakpoints_.begin(), breakpoints_.end(), epsilon)
                      : std::lower_bound(breakpoints_.begin(), breakpoints_.end(), epsilon);
  return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
}

CriticalEpsilons critical_epsilons(const conformal::CalibrationRecord& cal,
                                   std::span<const double> true_label_scores) {
  check_record(cal);
  const double rate = cal.lipschitz_product * cal.score_spec.score_lipschitz();
  const double q = cal.q_alpha;
  CriticalEpsilons crit;
  crit.entry.reserve(true_label_scores.size());
  crit.exit.reserve(true_label_scores.size());
  for (double s : true_label_scores) {
    if (s <= q) {
      crit.entry.push_back(0.0);
      if (q >= 1.0 || rate == 0.0)
        crit.exit.push_back(kInf);
      else
        crit.exit.push_back((q - s) / rate);
    } else {
      crit.entry.push_back(rate == 0.0 ? kInf : (s - q) / rate);
      crit.exit.push_back(-kInf);
    }
  }
  return crit;
}

CriticalEpsilons critical_epsilons(const conformal::CalibrationRecord& cal, const Eigen::MatrixXd& logits,
                                   std::span<const int> labels, scores::BoundMethod method) {
  check_record(cal);
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw DimensionError("one label per logit row required");
  const auto& spec = cal.score_spec;
  const double q = cal.q_alpha;
  const std::size_t m = labels.size();

  std::vector<double> true_scores(m);
  std::vector<Eigen::VectorXd> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    rows[i] = logits.row(static_cast<Eigen::Index>(i)).transpose();
    if (labels[i] < 0 || labels[i] >= logits.cols()) throw DimensionError("label out of range");
    true_scores[i] = scores::score(spec, scores::as_span(rows[i]), labels[i]);
  }

  const bool sigmoid = spec.kind == scores::ScoreKind::LacSigmoid;
  if (method == scores::BoundMethod::GlobalLipschitz) return critical_epsilons(cal, true_scores);

  if (sigmoid && !(q > 0.0 && q < 1.0)) {
    CriticalEpsilons crit = critical_epsilons(cal, true_scores);
    crit.warnings.push_back("q_alpha = " + fmt::format("{}", q) +
                            " lies outside (0, 1); tight threshold inversion replaced by the global bound");
    return crit;
  }

  CriticalEpsilons crit;
  crit.entry.resize(m);
  crit.exit.resize(m);
  const double lip = cal.lipschitz_product;
  if (sigmoid) {
    const double threshold = scores::sigmoid_inverse_threshold(spec, q);
    for (std::size_t i = 0; i < m; ++i) {
      const double target = rows[i][labels[i]];
      if (true_scores[i] <= q) {
        crit.entry[i] = 0.0;
        crit.exit[i] = lip == 0.0 ? kInf : std::max(0.0, (target - threshold) / lip);
      } else {
        crit.entry[i] = lip == 0.0 ? kInf : std::max(0.0, (threshold - target) / lip);
        crit.exit[i] = -kInf;
      }
    }
    return crit;
  }

  for (std::size_t i = 0; i < m; ++i) {
    const auto row = scores::as_span(rows[i]);
    const int y = labels[i];
    if (true_scores[i] <= q) {
      crit.entry[i] = 0.0;
      crit.exit[i] = last_radius_where([&](double eps) { return scores::bound_tight(spec, row, y, eps, lip).upper <= q; });
    } else {
      crit.entry[i] = first_radius_where([&](double eps) { return scores::bound_tight(spec, row, y, eps, lip).lower <= q; });
      crit.exit[i] = -kInf;
    }
  }
  return crit;
}

CoverageCurves coverage_curves(const CriticalEpsilons& crit) {
  const std::size_t m = crit.size();
  if (m == 0) throw DimensionError("coverage curves need at least one evaluation sample");
  if (crit.exit.size() != m) throw DimensionError("entry and exit radii differ in length");
  CoverageCurves curves;
  curves.m = m;

  // covmax(eps) = #{entry <= eps} / m.
  std::vector<double> entry;
  std::size_t at_zero = 0;
  for (double e : crit.entry) {
    if (e <= 0.0)
      ++at_zero;
    else if (std::isfinite(e))
      entry.push_back(e);
  }
  std::sort(entry.begin(), entry.end());
  std::vector<double> max_breaks;
  std::vector<std::size_t> max_counts{at_zero};
  for (std::size_t i = 0; i < entry.size(); ++i) {
    if (max_breaks.empty() || entry[i] != max_breaks.back()) {
      max_breaks.push_back(entry[i]);
      max_counts.push_back(max_counts.back());
    }
    ++max_counts.back();
  }

  // covmin(eps) = #{exit >= eps} / m.
  std::vector<double> exits;
  std::size_t unbounded = 0;
  for (double e : crit.exit) {
    if (e == kInf)
      ++unbounded;
    else if (e >= 0.0)
      exits.push_back(e);
  }
  std::sort(exits.begin(), exits.end());
  std::vector<double> min_breaks;
  std::vector<std::size_t> min_counts{exits.size() + unbounded};
  for (std::size_t i = 0; i < exits.size(); ++i) {
    if (min_breaks.empty() || exits[i] != min_breaks.back()) {
      min_breaks.push_back(exits[i]);
      min_counts.push_back(min_counts.back());
    }
    --min_counts.back();
  }

  auto to_fraction = [&](const std::vector<std::size_t>& counts) {
    std::vector<double> values(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      values[i] = static_cast<double>(counts[i]) / static_cast<double>(m);
    return values;
  };
  curves.covmax = StepCurve(max_breaks, to_fraction(max_counts), Continuity::RightContinuous);
  curves.covmin = StepCurve(min_breaks, to_fraction(min_counts), Continuity::LeftContinuous);
  curves.covmax_counts = std::move(max_counts);
  curves.covmin_counts = std::move(min_counts);
  return curves;
}

BandBuilder::BandBuilder(std::size_t m, double delta, CorrectionMode mode)
    : m_(checked_band_size(m, delta)), delta_(delta), mode_(mode),
      table_(m, delta / (2.0 * static_cast<double>(m) - 2.0)) {}

double BandBuilder::upper_for_count(std::size_t count) const {
  const double slack = mode_ == CorrectionMode::Corrected ? 1.0 / static_cast<double>(m_) : 0.0;
  return std::clamp(table_.upper(count) + slack, 0.0, 1.0);
}

double BandBuilder::lower_for_count(std::size_t count) const {
  const double slack = mode_ == CorrectionMode::Corrected ? 1.0 / static_cast<double>(m_) : 0.0;
  return std::clamp(table_.lower_from_misses(m_ - count) - slack, 0.0, 1.0);
}

CertifiedBand BandBuilder::build(const CoverageCurves& curves) const {
  if (curves.m != m_) throw DimensionError("curves were built from a different number of samples");
  CertifiedBand band;
  band.m = m_;
  band.delta = delta_;
  band.delta_prime = delta_ / (2.0 * static_cast<double>(m_) - 2.0);
  band.correction_mode = mode_;
  std::vector<double> upper(curves.covmax_counts.size());
  for (std::size_t j = 0; j < upper.size(); ++j) upper[j] = upper_for_count(curves.covmax_counts[j]);
  std::vector<double> lower(curves.covmin_counts.size());
  for (std::size_t j = 0; j < lower.size(); ++j) lower[j] = lower_for_count(curves.covmin_counts[j]);
  band.upper = StepCurve(curves.covmax.breakpoints(), std::move(upper), Continuity::RightContinuous);
  band.lower = StepCurve(curves.covmin.breakpoints(), std::move(lower), Continuity::LeftContinuous);
  return band;
}

CertifiedBand certified_band(const CoverageCurves& curves, double delta, CorrectionMode mode) {
  return BandBuilder(curves.m, delta, mode).build(curves);
}

CertifiedBand certified_band(const CriticalEpsilons& crit, double delta, CorrectionMode mode) {
  return certified_band(coverage_curves(crit), delta, mode);
}

std::vector<double> breakpoint_grid(const CoverageCurves& curves) {
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), curves.covmax.breakpoints().begin(), curves.covmax.breakpoints().end());
  grid.insert(grid.end(), curves.covmin.breakpoints().begin(), curves.covmin.breakpoints().end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::vector<AuditRow> audit_rows(const CoverageCurves& curves, const CertifiedBand& band,
                                 std::span<const double> grid) {
  std::vector<double> points = grid.empty() ? breakpoint_grid(curves) : std::vector<double>(grid.begin(), grid.end());
  std::vector<AuditRow> rows;
  rows.reserve(points.size());
  for (double eps : points) {
    if (!(eps >= 0.0)) throw DomainError("audit grid radii must be >= 0");
    rows.push_back({eps, band.lower(eps), curves.covmin(eps), curves.covmax(eps), band.upper(eps)});
  }
  return rows;
}

void write_audit_csv(const std::vector<AuditRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "epsilon,covmin_minus,covmin_emp,covmax_emp,covmax_plus\n";
  for (const auto& r : rows) {
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epsilon, r.covmin_minus, r.covmin_emp,
                       r.covmax_emp, r.covmax_plus);
  }
}

nlohmann::json band_sidecar(const CertifiedBand& band, const conformal::CalibrationRecord& cal) {
  return {{"m", band.m},
          {"delta", band.delta},
          {"delta_prime", band.delta_prime},
          {"correction_mode", to_string(band.correction_mode)},
          {"alpha", cal.alpha},
          {"q_alpha", cal.q_alpha}};
}

std::string to_string(CorrectionMode mode) {
  return mode == CorrectionMode::Corrected ? "corrected" : "raw";
}

CorrectionMode correction_mode_from_string(const std::string& text) {
  if (text == "corrected") return CorrectionMode::Corrected;
  if (text == "raw") return CorrectionMode::Raw;
  throw DomainError("unknown correction mode '" + text + "' (expected corrected or raw)");
}

}  // namespace liprcp::audit

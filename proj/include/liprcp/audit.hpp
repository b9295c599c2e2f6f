#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "liprcp/binomial.hpp"
#include "liprcp/conformal.hpp"
#include "liprcp/scores.hpp"

namespace liprcp::audit {

enum class Continuity { RightContinuous, LeftContinuous };

/// Piecewise-constant function of epsilon >= 0.
///
/// values.size() == breakpoints.size() + 1. With j the number of breakpoints
/// b satisfying b <= eps (RightContinuous) or b < eps (LeftContinuous), the
/// curve takes the value values[j] at eps.
class StepCurve {
 public:
  StepCurve() = default;
  StepCurve(std::vector<double> breakpoints, std::vector<double> values, Continuity continuity);

  double operator()(double epsilon) const;

  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<double>& values() const noexcept { return values_; }
  Continuity continuity() const noexcept { return continuity_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_{0.0};
  Continuity continuity_ = Continuity::RightContinuous;
};

/// Per-sample radii at which the true label enters the conservative set
/// (entry) and leaves the restrictive set (exit).
///
/// The label is in the conservative set at eps iff eps >= entry[i], and in
/// the restrictive set iff eps <= exit[i]. exit[i] = -inf encodes "never a
/// member", +inf "always a member".
struct CriticalEpsilons {
  std::vector<double> entry;
  std::vector<double> exit;
  std::vector<std::string> warnings;

  std::size_t size() const { return entry.size(); }
};

/// Critical radii from true-label scores under the global Lipschitz bound.
CriticalEpsilons critical_epsilons(const conformal::CalibrationRecord& cal, std::span<const double> true_label_scores);

/// Critical radii from evaluation logits (rows) and labels. The tight
/// sigmoid method uses the closed-form threshold logit; the tight softmax
/// method bisects the monotone corner bound. A tight sigmoid audit with q
/// outside (0, 1) falls back to the global method and records a warning.
CriticalEpsilons critical_epsilons(const conformal::CalibrationRecord& cal, const Eigen::MatrixXd& logits,
                                   std::span<const int> labels, scores::BoundMethod method);

/// Empirical covmax_m (right-continuous, non-decreasing) and covmin_m
/// (left-continuous, non-increasing), plus the hit counts behind them.
struct CoverageCurves {
  std::size_t m = 0;
  StepCurve covmax;
  StepCurve covmin;
  std::vector<std::size_t> covmax_counts;
  std::vector<std::size_t> covmin_counts;
};

CoverageCurves coverage_curves(const CriticalEpsilons& crit);

enum class CorrectionMode { Corrected, Raw };

/// Bracket for the coverage under attack, valid for all radii at once with
/// probability 1 - delta over the evaluation draw.
struct CertifiedBand {
  std::size_t m = 0;
  double delta = 0.1;
  double delta_prime = 0.0;  // delta / (2m - 2)
  StepCurve lower;           // covmin^-(., delta') - 1/m
  StepCurve upper;           // covmax^+(., delta') + 1/m
  CorrectionMode correction_mode = CorrectionMode::Corrected;
};

/// Precomputes the binomial inversions for a fixed (m, delta, mode); reuse it
/// to band many evaluation draws of the same size.
class BandBuilder {
 public:
  BandBuilder(std::size_t m, double delta, CorrectionMode mode);

  CertifiedBand build(const CoverageCurves& curves) const;
  double upper_for_count(std::size_t count) const;
  double lower_for_count(std::size_t count) const;

 private:
  std::size_t m_;
  double delta_;
  CorrectionMode mode_;
  BinomialBoundTable table_;
};

CertifiedBand certified_band(const CoverageCurves& curves, double delta,
                             CorrectionMode mode = CorrectionMode::Corrected);
CertifiedBand certified_band(const CriticalEpsilons& crit, double delta,
                             CorrectionMode mode = CorrectionMode::Corrected);

struct AuditRow {
  double epsilon;
  double covmin_minus;
  double covmin_emp;
  double covmax_emp;
  double covmax_plus;
};

/// Sorted union of {0} and every breakpoint of the empirical curves.
std::vector<double> breakpoint_grid(const CoverageCurves& curves);

/// Rows at each epsilon of `grid`, or at breakpoint_grid(curves) if empty.
std::vector<AuditRow> audit_rows(const CoverageCurves& curves, const CertifiedBand& band,
                                 std::span<const double> grid = {});

void write_audit_csv(const std::vector<AuditRow>& rows, const std::filesystem::path& path);

nlohmann::json band_sidecar(const CertifiedBand& band, const conformal::CalibrationRecord& cal);

std::string to_string(CorrectionMode mode);
CorrectionMode correction_mode_from_string(const std::string& text);

}  // namespace liprcp::audit

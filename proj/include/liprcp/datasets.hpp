#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace liprcp::datasets {

enum class DatasetKind { RawInputs, PrecomputedLogits };

/// Rows of raw features (n x d) or of externally computed logits (n x c).
struct LabeledDataset {
  DatasetKind kind = DatasetKind::RawInputs;
  Eigen::MatrixXd values;
  std::vector<int> labels;
  std::vector<std::string> ids;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Eigen::Index width() const { return values.cols(); }
  /// Throws DimensionError / DomainError on any broken invariant.
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

/// n i.i.d. draws: uniform label, then x ~ N(mu_label, I_d). The means form
/// a centred regular simplex with pairwise distance `separation`; it lives
/// in the first c coordinates when d >= c, otherwise (d == c - 1) in
/// Helmert coordinates.
LabeledDataset make_gaussian_mixture(std::size_t n, Eigen::Index d, int c, double separation, std::uint64_t seed);

/// Class means used by make_gaussian_mixture, one per row.
Eigen::MatrixXd mixture_means(Eigen::Index d, int c, double separation);

struct SplitPlan {
  double cal = 0.2;
  double eval = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
};

/// Disjoint parts of one dataset. `remainder` holds the rows not assigned
/// to cal/eval/test; the trainer uses them.
struct Split {
  LabeledDataset cal;
  LabeledDataset eval;
  LabeledDataset test;
  LabeledDataset remainder;
  std::vector<std::size_t> cal_rows, eval_rows, test_rows, remainder_rows;
};

/// Seeded permutation, then contiguous slices of floor(fraction * n) rows.
Split split(const LabeledDataset& dataset, const SplitPlan& plan);

/// Header `id,label,x_0..x_{d-1}` (raw inputs) or `id,label,logit_0..` (logits).
LabeledDataset load_csv(const std::filesystem::path& path);
/// As load_csv, but the file must hold logits.
LabeledDataset load_logits_csv(const std::filesystem::path& path);
LabeledDataset parse_csv(const std::string& text);
/// Decimal output with 17 significant digits; parses back bit-exactly.
void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path);
std::string to_csv(const LabeledDataset& dataset);

nlohmann::json metadata_json(const LabeledDataset& dataset, std::uint64_t seed);

std::string to_string(DatasetKind kind);

}  // namespace liprcp::datasets

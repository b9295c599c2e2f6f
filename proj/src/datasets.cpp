#include "liprcp/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "liprcp/error.hpp"
#include "liprcp/rng.hpp"

namespace liprcp::datasets {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view cell, std::size_t line) {
  double value = 0.0;
  const auto* begin = cell.data();
  const auto* end = cell.data() + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line);
  if (!std::isfinite(value)) throw ParseError("non-finite value '" + std::string(cell) + "'", line);
  return value;
}

int parse_label(std::string_view cell, std::size_t line) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw ParseError("label '" + std::string(cell) + "' is not an integer", line);
  if (value < 0) throw ParseError("negative label", line);
  return value;
}

}  // namespace

void LabeledDataset::validate() const {
  if (static_cast<std::size_t>(values.rows()) != labels.size() || ids.size() != labels.size())
    throw DimensionError("dataset rows, labels and ids disagree in length");
  if (num_classes < 1) throw DimensionError("dataset needs at least one class");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DimensionError("label " + std::to_string(y) + " out of range");
  }
  if (kind == DatasetKind::PrecomputedLogits && values.cols() != num_classes)
    throw DimensionError("logit width does not match the class count");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DomainError("duplicate row id '" + id + "'");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.kind = kind;
  out.num_classes = num_classes;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw DimensionError("subset row out of range");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.ids.push_back(ids[rows[i]]);
  }
  return out;
}

Eigen::MatrixXd mixture_means(Eigen::Index d, int c, double separation) {
  if (c < 2) throw DimensionError("a mixture needs at least two classes");
  if (d < 2) throw DimensionError("a mixture needs at least two dimensions");
  if (d < c - 1) throw DimensionError("the class simplex needs d >= c - 1");
  if (!(separation >= 0.0) || !std::isfinite(separation)) throw DomainError("separation must be finite and >= 0");
  const double scale = separation / std::sqrt(2.0);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(c, d);
  if (d >= c) {
    for (int k = 0; k < c; ++k) {
      for (int j = 0; j < c; ++j) means(k, j) = scale * ((j == k ? 1.0 : 0.0) - 1.0 / c);
    }
    return means;
  }
  // Helmert rows: orthonormal and orthogonal to the all-ones vector.
  for (int j = 1; j < c; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int k = 0; k < c; ++k) {
      const double h = k < j ? 1.0 : (k == j ? -static_cast<double>(j) : 0.0);
      means(k, j - 1) = scale * h / norm;
    }
  }
  return means;
}

LabeledDataset make_gaussian_mixture(std::size_t n, Eigen::Index d, int c, double separation, std::uint64_t seed) {
  const Eigen::MatrixXd means = mixture_means(d, c, separation);
  Rng rng = Rng(seed).substream("gaussian_mixture");
  LabeledDataset ds;
  ds.kind = DatasetKind::RawInputs;
  ds.num_classes = c;
  ds.values.resize(static_cast<Eigen::Index>(n), d);
  ds.labels.resize(n);
  ds.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c)));
    ds.labels[i] = y;
    ds.ids[i] = std::to_string(i);
    for (Eigen::Index j = 0; j < d; ++j) ds.values(static_cast<Eigen::Index>(i), j) = means(y, j) + rng.normal();
  }
  return ds;
}

Split split(const LabeledDataset& dataset, const SplitPlan& plan) {
  for (double f : {plan.cal, plan.eval, plan.test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("split fractions must lie in [0, 1]");
  }
  if (plan.cal + plan.eval + plan.test > 1.0 + 1e-12) throw DomainError("split fractions sum to more than 1");
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng(plan.seed).substream("split").shuffle(order);

  auto count = [&](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_cal = count(plan.cal);
  const std::size_t n_eval = count(plan.eval);
  const std::size_t n_test = std::min(count(plan.test), n - n_cal - n_eval);

  Split out;
  auto take = [&](std::size_t begin, std::size_t len) {
    return std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(begin + len));
  };
  out.cal_rows = take(0, n_cal);
  out.eval_rows = take(n_cal, n_eval);
  out.test_rows = take(n_cal + n_eval, n_test);
  out.remainder_rows = take(n_cal + n_eval + n_test, n - n_cal - n_eval - n_test);
  out.cal = dataset.subset(out.cal_rows);
  out.eval = dataset.subset(out.eval_rows);
  out.test = dataset.subset(out.test_rows);
  out.remainder = dataset.subset(out.remainder_rows);
  return out;
}

LabeledDataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file, expected a header", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw ParseError("header must start with id,label and name at least one value column", line_no);
  LabeledDataset ds;
  std::string prefix;
  if (header[2].starts_with("logit_")) {
    ds.kind = DatasetKind::PrecomputedLogits;
    prefix = "logit_";
  } else if (header[2].starts_with("x_")) {
    ds.kind = DatasetKind::RawInputs;
    prefix = "x_";
  } else {
    throw ParseError("value columns must be named logit_<j> or x_<j>", line_no);
  }
  const std::size_t width = header.size() - 2;
  for (std::size_t j = 0; j < width; ++j) {
    if (header[j + 2] != prefix + std::to_string(j))
      throw ParseError("expected column '" + prefix + std::to_string(j) + "', found '" + std::string(header[j + 2]) + "'",
                       line_no);
  }

  std::vector<double> flat;
  std::unordered_set<std::string> seen;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(fields.size()),
                       line_no);
    std::string id(fields[0]);
    if (id.empty()) throw ParseError("empty id", line_no);
    if (!seen.insert(id).second) throw ParseError("duplicate id '" + id + "'", line_no);
    const int label = parse_label(fields[1], line_no);
    for (std::size_t j = 0; j < width; ++j) flat.push_back(parse_double(fields[j + 2], line_no));
    if (ds.kind == DatasetKind::PrecomputedLogits && label >= static_cast<int>(width))
      throw ParseError("label " + std::to_string(label) + " has no logit column", line_no);
    max_label = std::max(max_label, label);
    ds.ids.push_back(std::move(id));
    ds.labels.push_back(label);
  }
  const auto rows = static_cast<Eigen::Index>(ds.labels.size());
  ds.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, static_cast<Eigen::Index>(width));
  ds.num_classes = ds.kind == DatasetKind::PrecomputedLogits ? static_cast<int>(width) : std::max(2, max_label + 1);
  return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

LabeledDataset load_logits_csv(const std::filesystem::path& path) {
  LabeledDataset ds = load_csv(path);
  if (ds.kind != DatasetKind::PrecomputedLogits) throw ParseError("file holds raw inputs, not logits", 1);
  return ds;
}

std::string to_csv(const LabeledDataset& dataset) {
  dataset.validate();
  const std::string prefix = dataset.kind == DatasetKind::PrecomputedLogits ? "logit_" : "x_";
  std::string out = "id,label";
  for (Eigen::Index j = 0; j < dataset.width(); ++j) out += "," + prefix + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += dataset.ids[i];
    out += ',';
    out += std::to_string(dataset.labels[i]);
    for (Eigen::Index j = 0; j < dataset.width(); ++j)
      out += fmt::format(",{:.17g}", dataset.values(static_cast<Eigen::Index>(i), j));
    out += '\n';
  }
  return out;
}

void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  const std::string text = to_csv(dataset);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

nlohmann::json metadata_json(const LabeledDataset& dataset, std::uint64_t seed) {
  return {{"n", dataset.size()}, {"d_or_c", dataset.width()}, {"kind", to_string(dataset.kind)}, {"seed", seed}};
}

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::RawInputs ? "raw_inputs" : "precomputed_logits";
}

}  // namespace liprcp::datasets

#pragma once

#include "ted/dataset.hpp"
#include "ted/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ted {

/// Maps values into {-1, 0, 1}: v < t1 -> -1, t1 <= v < t2 -> 0, v >= t2 -> 1.
struct Discretizer {
  double t1 = 0.0;
  double t2 = 0.0;

  Discretizer() = default;
  Discretizer(double lo, double hi);

  int bin(double v) const;

  /// Thresholds at the 1/3 and 2/3 quantiles of `values` (linear
  /// interpolation between order statistics).
  static Discretizer tertiles(std::span<const double> values);
};

Matrix discretize(const Matrix& values, const Discretizer& d);
std::vector<int> discretize_classes(std::span<const double> values, const Discretizer& d);

/// Sum of |pred - target| over columns, averaged over rows. For a single
/// column this is the ordinary mean absolute error.
double mae(const Matrix& pred, const Matrix& target);
/// Per-sample l1 distance over explanation attributes, averaged over samples.
double explanation_l1(const Matrix& pred, const Matrix& target);
double zero_one_accuracy(std::span<const int> pred, std::span<const int> target);

/// Column identifiers of a report row.
enum class Column { y_accuracy, y_mae_discretized, y_mae_continuous, e_mae_discretized, e_mae_continuous, e_accuracy };

inline constexpr std::size_t kColumnCount = 6;
std::string column_name(Column c);
bool higher_is_better(Column c);

/// Evaluation of one arm at one setting (k, lambda, or none).
struct ArmResult {
  std::string arm;
  std::string parameter_name;           // "k", "lambda", or "" when not applicable
  std::optional<double> parameter;      // unset renders as NA
  std::size_t test_size = 0;
  std::array<std::optional<double>, kColumnCount> values{};
  bool cited = false;                   // static reference row, not computed here

  std::optional<double>& at(Column c) { return values[static_cast<std::size_t>(c)]; }
  const std::optional<double>& at(Column c) const { return values[static_cast<std::size_t>(c)]; }
};

struct ReportRow {
  ArmResult result;
  std::array<bool, kColumnCount> best{};  // best value within the arm's rows
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  std::size_t test_size = 0;
};

/// Canonical arm ordering used by reports; unknown arms sort after known ones
/// by name.
int arm_rank(const std::string& arm);

/// Sorts rows by arm then parameter, and marks per-arm column optima. Cited
/// rows are exempt from the test-size consistency check.
MetricsReport compile_report(std::vector<ArmResult> results);

/// Y and E metrics of a prediction against the truth.
struct EvaluationThresholds {
  Discretizer y;
  Discretizer e;
};

void score_labels(ArmResult& row, const Target& pred, const Target& truth, const Discretizer& y_bins);
void score_explanations(ArmResult& row, const Target& pred, const Target& truth, const Discretizer& e_bins);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
/// Aligned columns; best values carry a trailing '*'.
std::string render_table(const MetricsReport& report);

}  // namespace ted

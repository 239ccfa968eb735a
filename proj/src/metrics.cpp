#include "ted/metrics.hpp"

#include "text_util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace ted {

Discretizer::Discretizer(double lo, double hi) : t1(lo), t2(hi) {
  if (!(lo < hi)) throw std::invalid_argument("discretizer needs t1 < t2");
}

int Discretizer::bin(double v) const {
  if (v < t1) return -1;
  if (v < t2) return 0;
  return 1;
}

Discretizer Discretizer::tertiles(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("tertiles need at least two values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double a = quantile(1.0 / 3.0);
  double b = quantile(2.0 / 3.0);
  if (!(b > a)) b = std::nextafter(a, std::numeric_limits<double>::infinity());
  return {a, b};
}

Matrix discretize(const Matrix& values, const Discretizer& d) {
  return values.unaryExpr([&](double v) { return static_cast<double>(d.bin(v)); });
}

std::vector<int> discretize_classes(std::span<const double> values, const Discretizer& d) {
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(d.bin(v));
  return out;
}

double mae(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mae: shapes " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                                " and " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                                " differ");
  }
  if (pred.rows() == 0) throw std::invalid_argument("mae: no samples");
  return (pred - target).cwiseAbs().sum() / static_cast<double>(pred.rows());
}

double explanation_l1(const Matrix& pred, const Matrix& target) { return mae(pred, target); }

double zero_one_accuracy(std::span<const int> pred, std::span<const int> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == target[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::string column_name(Column c) {
  switch (c) {
    case Column::y_accuracy: return "y_accuracy";
    case Column::y_mae_discretized: return "y_mae_discretized";
    case Column::y_mae_continuous: return "y_mae_continuous";
    case Column::e_mae_discretized: return "e_mae_discretized";
    case Column::e_mae_continuous: return "e_mae_continuous";
    case Column::e_accuracy: return "e_accuracy";
  }
  return "?";
}

bool higher_is_better(Column c) { return c == Column::y_accuracy || c == Column::e_accuracy; }

int arm_rank(const std::string& arm) {
  static const std::vector<std::string> order = {
      "reference_lasso_Y", "reference_rf_Y",  "baseline_Y",     "baseline_E",     "multitask",
      "embed_Y_knn",       "embed_E_knn",     "pairwise_Y_knn", "pairwise_E_knn", "pairwise_YE_knn"};
  const auto it = std::find(order.begin(), order.end(), arm);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

MetricsReport compile_report(std::vector<ArmResult> results) {
  if (results.empty()) throw std::invalid_argument("cannot compile a report from zero results");
  MetricsReport report;
  std::optional<std::size_t> size;
  for (const auto& r : results) {
    if (r.cited) continue;
    if (size && *size != r.test_size) {
      throw std::invalid_argument("arm " + r.arm + " was evaluated on " + std::to_string(r.test_size) +
                                  " samples, others on " + std::to_string(*size));
    }
    size = r.test_size;
  }
  report.test_size = size.value_or(0);

  std::stable_sort(results.begin(), results.end(), [](const ArmResult& a, const ArmResult& b) {
    const int ra = arm_rank(a.arm);
    const int rb = arm_rank(b.arm);
    if (ra != rb) return ra < rb;
    if (a.arm != b.arm) return a.arm < b.arm;
    // NA before any numeric setting
    const double pa = a.parameter.value_or(-std::numeric_limits<double>::infinity());
    const double pb = b.parameter.value_or(-std::numeric_limits<double>::infinity());
    return pa < pb;
  });
  for (auto& r : results) report.rows.push_back({std::move(r), {}});

  for (std::size_t start = 0; start < report.rows.size();) {
    std::size_t end = start;
    while (end < report.rows.size() && report.rows[end].result.arm == report.rows[start].result.arm) ++end;
    if (end - start > 1 && !report.rows[start].result.cited) {
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        const auto col = static_cast<Column>(c);
        std::optional<double> best;
        for (std::size_t i = start; i < end; ++i) {
          const auto& v = report.rows[i].result.values[c];
          if (!v) continue;
          if (!best || (higher_is_better(col) ? *v > *best : *v < *best)) best = *v;
        }
        for (std::size_t i = start; i < end && best; ++i) {
          const auto& v = report.rows[i].result.values[c];
          report.rows[i].best[c] = v && *v == *best;
        }
      }
    }
    start = end;
  }
  return report;
}

void score_labels(ArmResult& row, const Target& pred, const Target& truth, const Discretizer& y_bins) {
  if (pred.kind != truth.kind) throw std::invalid_argument("label prediction kind differs from the truth");
  if (truth.kind == ValueKind::continuous) {
    row.at(Column::y_mae_continuous) = mae(pred.values, truth.values);
    const Matrix dp = discretize(pred.values, y_bins);
    const Matrix dt = discretize(truth.values, y_bins);
    row.at(Column::y_mae_discretized) = mae(dp, dt);
    std::vector<int> cp, ct;
    for (Eigen::Index i = 0; i < dp.rows(); ++i) {
      cp.push_back(static_cast<int>(dp(i, 0)));
      ct.push_back(static_cast<int>(dt(i, 0)));
    }
    row.at(Column::y_accuracy) = zero_one_accuracy(cp, ct);
  } else {
    row.at(Column::y_accuracy) = zero_one_accuracy(pred.classes, truth.classes);
  }
}

void score_explanations(ArmResult& row, const Target& pred, const Target& truth, const Discretizer& e_bins) {
  if (pred.kind != truth.kind) throw std::invalid_argument("explanation prediction kind differs from the truth");
  if (truth.kind == ValueKind::continuous) {
    row.at(Column::e_mae_continuous) = explanation_l1(pred.values, truth.values);
    row.at(Column::e_mae_discretized) = explanation_l1(discretize(pred.values, e_bins), discretize(truth.values, e_bins));
  } else {
    row.at(Column::e_accuracy) = zero_one_accuracy(pred.classes, truth.classes);
  }
}

// ----------------------------------------------------------------- serialization

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["test_size"] = report.test_size;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    const auto& a = row.result;
    r["arm"] = a.arm;
    r["parameter_name"] = a.parameter_name;
    r["parameter"] = a.parameter ? nlohmann::ordered_json(*a.parameter) : nlohmann::ordered_json(nullptr);
    r["test_size"] = a.test_size;
    r["cited"] = a.cited;
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      const auto name = column_name(static_cast<Column>(c));
      r[name] = a.values[c] ? nlohmann::ordered_json(*a.values[c]) : nlohmann::ordered_json(nullptr);
    }
    auto best = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (row.best[c]) best.push_back(column_name(static_cast<Column>(c)));
    }
    r["best"] = best;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport report;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    report.test_size = j.at("test_size").get<std::size_t>();
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      auto& a = row.result;
      a.arm = r.at("arm").get<std::string>();
      a.parameter_name = r.at("parameter_name").get<std::string>();
      if (!r.at("parameter").is_null()) a.parameter = r.at("parameter").get<double>();
      a.test_size = r.at("test_size").get<std::size_t>();
      a.cited = r.value("cited", false);
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        const auto& v = r.at(column_name(static_cast<Column>(c)));
        if (!v.is_null()) a.values[c] = v.get<double>();
      }
      for (const auto& b : r.at("best")) {
        for (std::size_t c = 0; c < kColumnCount; ++c) {
          if (b.get<std::string>() == column_name(static_cast<Column>(c))) row.best[c] = true;
        }
      }
      report.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string render_table(const MetricsReport& report) {
  static const char* headers[kColumnCount] = {"Y acc", "Y MAE disc", "Y MAE cont",
                                              "E MAE disc", "E MAE cont", "E acc"};
  std::array<bool, kColumnCount> used{};
  for (const auto& row : report.rows) {
    for (std::size_t c = 0; c < kColumnCount; ++c) used[c] = used[c] || row.result.values[c].has_value();
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head = {"arm", "k/lambda"};
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    if (used[c]) head.emplace_back(headers[c]);
  }
  cells.push_back(head);
  for (const auto& row : report.rows) {
    const auto& a = row.result;
    std::vector<std::string> line;
    line.push_back(a.arm + (a.cited ? " (cited)" : ""));
    if (a.parameter) {
      std::ostringstream p;
      p << a.parameter_name << "=" << *a.parameter;
      line.push_back(p.str());
    } else {
      line.emplace_back("NA");
    }
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (!used[c]) continue;
      if (!a.values[c]) {
        line.emplace_back("NA");
        continue;
      }
      std::ostringstream v;
      v << std::fixed << std::setprecision(4) << *a.values[c] << (row.best[c] ? "*" : "");
      line.push_back(v.str());
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(width[i])) << cells[r][i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[i])) << cells[r][i];
      }
    }
    out << "\n";
    if (r == 0) out << std::string(std::accumulate(width.begin(), width.end(), std::size_t{0}) + 2 * (width.size() - 1), '-') << "\n";
  }
  out << "test samples: " << report.test_size << "\n";
  return out.str();
}

}  // namespace ted

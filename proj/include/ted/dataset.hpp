#pragma once

#include "ted/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ted {

enum class ValueKind { continuous, categorical };
enum class Split { train, validation, test };

std::string to_string(ValueKind kind);
ValueKind parse_value_kind(const std::string& text);
std::string to_string(Split split);

/// A label or explanation column block. Continuous targets live in `values`
/// (n x dims); categorical targets live in `classes` with values in
/// [0, n_classes).
struct Target {
  ValueKind kind = ValueKind::continuous;
  Matrix values;
  std::vector<int> classes;
  int n_classes = 0;

  static Target continuous(Matrix values);
  static Target categorical(std::vector<int> classes, int n_classes);

  std::size_t rows() const;
  /// Number of output dimensions a model must produce for this target
  /// (value columns, or class count for categorical).
  std::size_t width() const;
  bool empty() const { return rows() == 0 || width() == 0; }
  Target subset(std::span<const std::size_t> rows) const;
};

struct Dataset {
  Matrix features;
  Target labels;
  Target explanations;
  std::vector<Split> splits;
  std::vector<std::string> feature_names;
  std::vector<std::string> explanation_names;
  std::string label_name;

  std::size_t samples() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(features.cols()); }
  bool has_explanations() const { return !explanations.empty(); }

  std::vector<std::size_t> indices_of(Split split) const;
  /// Rows in the given order; split tags travel with their rows.
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset split_part(Split split) const;

  /// Throws std::invalid_argument when the alignment invariants are broken.
  void validate() const;
};

/// Column roles for CSV loading. An empty `feature_columns` means "every
/// column not otherwise named".
struct CsvSchema {
  std::string label_column;
  std::vector<std::string> explanation_columns;
  std::vector<std::string> feature_columns;
  ValueKind label_kind = ValueKind::continuous;
  ValueKind explanation_kind = ValueKind::continuous;
};

/// Reads `key = value` lines: label_column, explanation_columns,
/// feature_columns (list or `rest`), label_kind, explanation_kind.
CsvSchema load_schema(const std::filesystem::path& path);
void write_schema(const CsvSchema& schema, const std::filesystem::path& path);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
/// Writes features, label and explanations with a header row; split tags are
/// not stored.
void write_csv(const Dataset& d, const std::filesystem::path& path);

/// Replaces every feature cell x with log10(100 + x).
Dataset log_transform(const Dataset& d);

struct StandardizationStats {
  Vector mean;
  Vector stddev;  // population convention, degenerate entries already set to 1
};

/// Standardizes features. Without `stats`, mean and std come from the
/// training rows only and are applied to every split.
std::pair<Dataset, StandardizationStats> standardize(
    const Dataset& d, const std::optional<StandardizationStats>& stats = std::nullopt);
Dataset unstandardize(const Dataset& d, const StandardizationStats& stats);

/// Scores each feature column given training features and a continuous label
/// column; higher is better.
using FeatureScorer = std::function<Vector(const Matrix& features, const Vector& labels)>;

enum class RankingMethod { correlation };

/// |Pearson correlation| with the label; constant columns score 0.
Vector correlation_scores(const Matrix& features, const Vector& labels);

std::pair<Dataset, std::vector<std::size_t>> select_features(const Dataset& d, std::size_t k,
                                                             const FeatureScorer& scorer);
std::pair<Dataset, std::vector<std::size_t>> select_features(
    const Dataset& d, std::size_t k, RankingMethod method = RankingMethod::correlation);
/// Restricts columns to `indices` without ranking, e.g. to replay a selection.
Dataset keep_features(const Dataset& d, std::span<const std::size_t> indices);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

Dataset split_fixed(const Dataset& d, SplitCounts counts);

struct SyntheticSpec {
  std::size_t n_samples = 500;
  std::size_t n_features = 50;
  std::size_t n_latent = 5;
  double feature_noise = 1.0;

  ValueKind explanation_kind = ValueKind::continuous;
  std::size_t n_explanations = 6;  // continuous rule
  std::size_t n_clusters = 3;      // categorical rule

  ValueKind label_kind = ValueKind::continuous;
  std::size_t n_label_classes = 3;  // categorical labels only
  double label_noise = 0.0;

  std::uint64_t seed = 1;

  void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/// Generator output together with the maps that produced it.
struct SyntheticData {
  Dataset data;
  Matrix latent;          // n x n_latent
  Matrix feature_map;     // n_features x n_latent
  Matrix explanation_map; // continuous: n_explanations x n_latent; categorical: cluster centers
  Vector label_weights;   // continuous labels from continuous explanations
};

/// Latent z ~ N(0, I); X = z A^T + noise; E from z; Y from E. Every sample is
/// tagged train. Pure function of `spec`.
SyntheticData generate_synthetic_detailed(const SyntheticSpec& spec);
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace ted

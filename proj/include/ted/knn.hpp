#pragma once

#include "ted/dataset.hpp"
#include "ted/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ted {

enum class DistanceMetric { cosine, euclidean };

std::string to_string(DistanceMetric m);
DistanceMetric parse_distance_metric(const std::string& text);

/// 1 - cos for `cosine` (zero-length vectors count as cos = 0), l2 for
/// `euclidean`.
double embedding_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric);

/// Gaussian kernel width. Unset means the median of each query's retrieved
/// distances, floored at 1e-12.
struct BandwidthPolicy {
  std::optional<double> fixed;
};

struct Neighborhood {
  std::vector<std::size_t> indices;
  std::vector<double> distances;  // ascending
  std::vector<double> weights;    // sum to 1
};

/// w_i proportional to exp(-d_i^2 / (2 sigma^2)), normalized. Falls back to
/// uniform weights if every raw weight underflows.
std::vector<double> gaussian_weights(std::span<const double> distances, double bandwidth);

/// Exact brute-force neighbor index over stored training embeddings and
/// their labels and explanations. Immutable after construction.
class NeighborIndex {
 public:
  NeighborIndex(Matrix embeddings, Target labels, Target explanations, DistanceMetric metric,
                BandwidthPolicy bandwidth = {});

  std::size_t size() const { return static_cast<std::size_t>(embeddings_.rows()); }
  Eigen::Index dimension() const { return embeddings_.cols(); }
  DistanceMetric metric() const { return metric_; }
  const BandwidthPolicy& bandwidth() const { return bandwidth_; }
  const Matrix& embeddings() const { return embeddings_; }
  const Target& labels() const { return labels_; }
  const Target& explanations() const { return explanations_; }

  /// The min(k, size()) nearest rows, ties broken by lower row index.
  Neighborhood query(std::span<const double> f, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static NeighborIndex load(const std::filesystem::path& path);

 private:
  Matrix embeddings_;
  Target labels_;
  Target explanations_;
  DistanceMetric metric_;
  BandwidthPolicy bandwidth_;
};

NeighborIndex build_index(Matrix embeddings, Target labels, Target explanations, DistanceMetric metric,
                          BandwidthPolicy bandwidth = {});

/// sum_i w_i * values[index_i] per column.
Vector predict_continuous(const Neighborhood& nbhd, const Matrix& values);

enum class Voting { kernel, majority };

/// Class with the largest summed weight (or count, for majority voting);
/// ties go to the lower class index.
int predict_categorical(const Neighborhood& nbhd, std::span<const int> classes, int n_classes,
                        Voting voting = Voting::kernel);

/// kNN predictions for a batch of query embeddings.
struct KnnPrediction {
  Target labels;
  Target explanations;
};

KnnPrediction predict_batch(const NeighborIndex& index, const Matrix& queries, std::size_t k,
                            Voting voting = Voting::kernel);

}  // namespace ted

#pragma once

#include "ted/dataset.hpp"
#include "ted/network.hpp"
#include "ted/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ted {

enum class PairRelation { neighbor, non_neighbor, excluded };

std::string to_string(PairRelation r);
PairRelation parse_pair_relation(const std::string& text);

enum class Space { y, e };

/// Decides which pairs count as neighbors. Continuous specs threshold the l1
/// distance: d <= c_lo is a neighbor, d > c_hi a non-neighbor, anything in
/// between falls in the buffer and is excluded. Categorical specs compare
/// class indices (see relation_categorical).
struct NeighborSpec {
  ValueKind kind = ValueKind::continuous;
  double c1 = 0.0;  // Y-space neighbor threshold
  double c2 = 0.0;  // Y-space non-neighbor threshold
  double c3 = 0.0;  // E-space neighbor threshold
  double c4 = 0.0;  // E-space non-neighbor threshold

  void validate() const;
};

struct LossParams {
  double m1 = 0.25;  // Y-space margin
  double m2 = 0.25;  // E-space margin
  double w = 1.0;    // weight on the E-space term

  void validate() const;
};

enum class PairMode { y_only, e_only, y_and_e };

std::string to_string(PairMode m);

struct PairRecord {
  std::size_t a = 0;
  std::size_t b = 0;
  PairRelation rel_y = PairRelation::excluded;
  PairRelation rel_e = PairRelation::excluded;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct PairBatch {
  std::vector<PairRecord> pairs;
  std::uint64_t seed = 0;

  friend bool operator==(const PairBatch&, const PairBatch&) = default;
};

struct CosineSimilarity {
  double value = 0.0;
  bool zero_norm = false;  // one side had zero length; value is then 0
};

CosineSimilarity cosine(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

PairRelation relation_continuous(std::span<const double> ya, std::span<const double> yb, double c_lo,
                                 double c_hi);
PairRelation relation_categorical(int y_a, int y_b, int e_a, int e_b, Space space);

/// 1 - cos for neighbors, max(cos - margin, 0) for non-neighbors, 0 when excluded.
double pair_loss(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double margin);
double loss_xy(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double m1);
double loss_xe(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double m2);
double loss_combined(std::span<const double> fa, std::span<const double> fb, PairRelation rel_y,
                     PairRelation rel_e, const LossParams& params);
/// The per-pair objective for a training mode.
double loss_for_mode(std::span<const double> fa, std::span<const double> fb, const PairRecord& pair,
                     const LossParams& params, PairMode mode);

struct PairLossGrad {
  double loss = 0.0;
  Vector grad_a;
  Vector grad_b;
  bool zero_norm = false;
};

/// Analytic gradient of pair_loss w.r.t. both embeddings. At the clamp
/// boundary cos == margin the subgradient is 0; zero-norm inputs get 0.
PairLossGrad pair_loss_grad(std::span<const double> fa, std::span<const double> fb, PairRelation rel,
                            double margin);
PairLossGrad mode_loss_grad(std::span<const double> fa, std::span<const double> fb, const PairRecord& pair,
                            const LossParams& params, PairMode mode);

/// Both relations for rows a and b of a dataset.
PairRecord relate(const Dataset& d, std::size_t a, std::size_t b, const NeighborSpec& spec);

struct SamplingOptions {
  PairMode mode = PairMode::y_and_e;
  /// Alternate neighbor / non-neighbor draws in the primary space.
  bool balanced = false;
};

/// Draws ordered pairs (a != b) uniformly from the training rows of `d`,
/// rejecting pairs that carry no loss in `options.mode`, until `n_pairs` are
/// kept. Gives up after 100 * n_pairs draws.
PairBatch sample_pairs(const Dataset& d, const NeighborSpec& spec, std::size_t n_pairs, std::uint64_t seed,
                       const SamplingOptions& options = {});

/// Mean pairwise loss of a batch and its gradient, routed through the trunk.
LossAndGradients pairwise_backward(const Network& net, const Matrix& x, std::span<const PairRecord> pairs,
                                   const LossParams& params, PairMode mode);

struct PairwiseTrainResult {
  TrainResult train;
  std::size_t zero_norm_events = 0;
};

/// Minimizes the mean pairwise loss over `pairs` by gradient descent on the
/// trunk. Heads are left untouched; one SGD item is one pair.
PairwiseTrainResult train_pairwise(Network net, const Matrix& x, const PairBatch& pairs, const LossParams& params,
                                   const TrainConfig& config, PairMode mode);

void write_pairs(const PairBatch& batch, const std::filesystem::path& path);
PairBatch read_pairs(const std::filesystem::path& path);

}  // namespace ted

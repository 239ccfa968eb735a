#pragma once

#include "ted/knn.hpp"
#include "ted/network.hpp"
#include "ted/pairloss.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

// Brute-force reference implementations for tests. Everything here is
// written with plain loops and avoids calling the routines it checks.
namespace ted::oracle {

struct OracleTolerance {
  double gradient_rel = 1e-4;
  double prediction_abs = 1e-9;
  double fd_step = 1e-5;
  /// Denominator floor of the relative gradient error.
  double gradient_floor = 1e-6;

  void validate() const;
};

struct ExhaustiveResult {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

/// Distances to every row, fully sorted by (distance, index); first k kept.
ExhaustiveResult knn_exhaustive(const Matrix& points, std::span<const double> query, std::size_t k,
                                DistanceMetric metric);

using LossFunction = std::function<double(std::span<const double>)>;

/// (f(p + h e_i) - f(p - h e_i)) / 2h for every i.
std::vector<double> finite_difference_grad(const LossFunction& f, std::span<const double> params, double step);

/// Normal-equation solution of min ||X w - y||, with 1e-9 I added when X^T X
/// is singular.
Vector least_squares_closed_form(const Matrix& x, const Vector& y);

double cosine_direct(std::span<const double> a, std::span<const double> b);
double pair_loss_direct(std::span<const double> a, std::span<const double> b, PairRelation rel, double margin);
double combined_loss_direct(std::span<const double> a, std::span<const double> b, PairRelation rel_y,
                            PairRelation rel_e, double m1, double m2, double w);
std::vector<double> gaussian_weights_direct(std::span<const double> distances, double bandwidth);

/// Row-by-row forward pass that reads the layer weights directly.
std::vector<std::vector<double>> embed_direct(const Network& net, const Matrix& x);
std::vector<std::vector<double>> head_direct(const Network& net, std::size_t head,
                                             const std::vector<std::vector<double>>& embedding);

double mse_direct(const std::vector<std::vector<double>>& pred, const Matrix& target);
double cross_entropy_direct(const std::vector<std::vector<double>>& logits, std::span<const int> classes);

/// sum_h weight_h * loss_h with MSE or cross-entropy per head.
double supervised_loss_direct(const Network& net, const Matrix& x, const std::vector<const Target*>& targets,
                              const std::vector<double>& weights);
/// Mean per-pair loss of the mode over the embedding of `x`.
double pairwise_loss_direct(const Network& net, const Matrix& x, std::span<const PairRecord> pairs,
                            const LossParams& params, PairMode mode);

/// Largest per-parameter |a - n| / max(|a|, |n|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor);

struct GradcheckCase {
  std::string loss;  // mse, cross_entropy, multitask, pair_y, pair_e, pair_combined
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Seeded gradient checks of every loss through a 2-layer trunk with
/// regression or classification heads.
std::vector<GradcheckCase> run_gradcheck_suite(std::size_t instances, std::uint64_t seed,
                                               const OracleTolerance& tol = {});

}  // namespace ted::oracle

#pragma once

#include "ted/dataset.hpp"
#include "ted/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ted {

enum class Activation { identity, rectifier };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

/// y = act(x W^T + b) applied row-wise to a batch.
struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out, Activation act);

  Eigen::Index inputs() const { return weights.cols(); }
  Eigen::Index outputs() const { return weights.rows(); }
  Matrix forward(const Matrix& x) const;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

enum class HeadKind { regression, classification };

struct Head {
  std::vector<DenseLayer> layers;
  HeadKind kind = HeadKind::regression;

  Eigen::Index outputs() const { return layers.back().outputs(); }
  friend bool operator==(const Head&, const Head&) = default;
};

struct ForwardResult {
  Matrix embedding;
  std::vector<Matrix> heads;
};

/// Dense feed-forward network: a shared trunk whose output is the embedding,
/// followed by one or two heads (Y first, then E). An empty trunk makes the
/// embedding the input itself.
class Network {
 public:
  Network() = default;
  Network(Eigen::Index input_width, std::vector<DenseLayer> trunk, std::vector<Head> heads);

  Eigen::Index input_width() const { return input_width_; }
  Eigen::Index embedding_width() const;
  const std::vector<DenseLayer>& trunk() const { return trunk_; }
  const std::vector<Head>& heads() const { return heads_; }
  std::vector<DenseLayer>& trunk() { return trunk_; }
  std::vector<Head>& heads() { return heads_; }

  std::size_t parameter_count() const;
  /// Trunk layers, then each head's layers, each as weights (row-major) then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void check_shapes() const;

  Eigen::Index input_width_ = 0;
  std::vector<DenseLayer> trunk_;
  std::vector<Head> heads_;
};

struct HeadShape {
  Eigen::Index outputs = 1;
  HeadKind kind = HeadKind::regression;
  std::vector<Eigen::Index> hidden;  // widths before the output layer
  Activation hidden_activation = Activation::rectifier;
};

struct NetworkShape {
  Eigen::Index input_width = 0;
  std::vector<Eigen::Index> trunk_widths{64};  // last entry is the embedding width
  Activation trunk_activation = Activation::identity;
  std::vector<HeadShape> heads;
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Network make_network(const NetworkShape& shape, std::uint64_t seed);

/// Head shape that fits a target: a single regression output per value
/// column, or one logit per class.
HeadShape head_for(const Target& target);

ForwardResult forward(const Network& net, const Matrix& x);
Matrix embed(const Network& net, const Matrix& x);
Matrix head_forward(const Network& net, std::size_t head, const Matrix& embedding);

// ----------------------------------------------------------------- losses

double loss_mse(const Matrix& pred, const Matrix& target);
/// Mean over the batch of -log softmax(logits)[target].
double loss_cross_entropy(const Matrix& logits, std::span<const int> targets);

/// Loss value together with its derivative w.r.t. the prediction.
struct LossGrad {
  double value = 0.0;
  Matrix grad;
};

LossGrad mse_with_grad(const Matrix& pred, const Matrix& target);
LossGrad cross_entropy_with_grad(const Matrix& logits, std::span<const int> targets);
/// Picks MSE or cross-entropy from the target's kind.
LossGrad target_loss(const Matrix& out, const Target& target);

double loss_multitask(const Matrix& out_y, const Target& target_y, const Matrix& out_e,
                      const Target& target_e, double lambda);

// ----------------------------------------------------------------- gradients

struct LayerGrad {
  Matrix weights;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGrad> trunk;
  std::vector<std::vector<LayerGrad>> heads;

  static Gradients zeros_like(const Network& net);
  std::vector<double> flatten() const;  // same order as Network::parameters
};

/// Intermediate activations kept for backpropagation.
struct ForwardCache {
  std::vector<Matrix> trunk_inputs;
  std::vector<Matrix> trunk_pre;
  std::vector<std::vector<Matrix>> head_inputs;
  std::vector<std::vector<Matrix>> head_pre;
  ForwardResult out;
};

ForwardCache forward_cached(const Network& net, const Matrix& x, bool include_heads = true);

/// Derivatives of a loss w.r.t. the network outputs. Empty matrices mean the
/// output does not enter the loss.
struct OutputGrads {
  Matrix embedding;
  std::vector<Matrix> heads;
};

/// Chain rule from output gradients to parameter gradients. Heads with no
/// incoming gradient are skipped and report zeros.
Gradients backpropagate(const Network& net, const ForwardCache& cache, const OutputGrads& grads);

/// Weighted sum of per-head supervised losses: sum_h weight_h * loss_h.
/// With targets {Y, E} and weights {1, lambda} this is loss_Y + lambda loss_E.
struct SupervisedLoss {
  std::vector<const Target*> targets;  // one per head, nullptr skips a head
  std::vector<double> weights;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

LossAndGradients backward(const Network& net, const Matrix& x, const SupervisedLoss& spec);

// ----------------------------------------------------------------- training

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  /// Rate for the last trunk layer; falls back to `learning_rate`.
  std::optional<double> embedding_learning_rate;
  double multitask_weight = 1.0;  // lambda in loss_Y + lambda loss_E
  double dropout = 0.0;           // rejected unless zero
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  Network net;
  std::vector<double> loss_history;  // mean batch loss per epoch
};

/// Per-batch objective: returns the loss on the selected rows and the
/// gradients for every parameter.
using BatchObjective =
    std::function<LossAndGradients(const Network& net, std::span<const std::size_t> rows)>;

/// Plain mini-batch gradient descent over `n_items` items. Each epoch draws a
/// seeded shuffle and walks it in batches, keeping the last partial batch.
TrainResult train_sgd(Network net, std::size_t n_items, const TrainConfig& config,
                      const BatchObjective& objective);

/// Supervised training on features `x` against per-head targets.
TrainResult train(Network net, const Matrix& x, const SupervisedLoss& loss, const TrainConfig& config);

/// theta -= rate * grad with per-layer rates.
void apply_step(Network& net, const Gradients& g, const TrainConfig& config);

// ----------------------------------------------------------------- checkpoints

void write_checkpoint(const Network& net, std::ostream& out);
Network read_checkpoint(std::istream& in);
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace ted

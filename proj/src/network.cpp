#include "ted/network.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ted {

std::string to_string(Activation a) { return a == Activation::identity ? "identity" : "rectifier"; }

Activation parse_activation(const std::string& text) {
  const auto t = std::string(detail::trim(text));
  if (t == "identity" || t == "linear") return Activation::identity;
  if (t == "rectifier" || t == "relu") return Activation::rectifier;
  throw std::invalid_argument("unknown activation '" + t + "'");
}

namespace {

void apply_activation(Matrix& z, Activation a) {
  if (a == Activation::rectifier) z = z.cwiseMax(0.0);
}

// Derivative mask; the rectifier's subgradient at exactly 0 is 0.
void scale_by_activation_derivative(Matrix& g, const Matrix& pre, Activation a) {
  if (a == Activation::rectifier) g = (pre.array() > 0.0).select(g, 0.0);
}

void check_input(const Network& net, const Matrix& x) {
  if (x.cols() != net.input_width()) {
    throw std::invalid_argument("input has " + std::to_string(x.cols()) + " columns, network expects " +
                                std::to_string(net.input_width()));
  }
}

}  // namespace

DenseLayer::DenseLayer(Eigen::Index in, Eigen::Index out, Activation act)
    : weights(Matrix::Zero(out, in)), bias(Vector::Zero(out)), activation(act) {}

Matrix DenseLayer::forward(const Matrix& x) const {
  Matrix z = x * weights.transpose();
  z.rowwise() += bias.transpose();
  apply_activation(z, activation);
  return z;
}

// ----------------------------------------------------------------- Network

Network::Network(Eigen::Index input_width, std::vector<DenseLayer> trunk, std::vector<Head> heads)
    : input_width_(input_width), trunk_(std::move(trunk)), heads_(std::move(heads)) {
  check_shapes();
}

Eigen::Index Network::embedding_width() const {
  return trunk_.empty() ? input_width_ : trunk_.back().outputs();
}

void Network::check_shapes() const {
  if (input_width_ < 1) throw std::invalid_argument("network input width must be positive");
  Eigen::Index width = input_width_;
  for (const auto& layer : trunk_) {
    if (layer.inputs() != width || layer.bias.size() != layer.outputs()) {
      throw std::invalid_argument("trunk layer shapes are inconsistent");
    }
    width = layer.outputs();
  }
  for (const auto& head : heads_) {
    if (head.layers.empty()) throw std::invalid_argument("a head needs at least one layer");
    Eigen::Index w = width;
    for (const auto& layer : head.layers) {
      if (layer.inputs() != w || layer.bias.size() != layer.outputs()) {
        throw std::invalid_argument("head layer shapes are inconsistent with the embedding width");
      }
      w = layer.outputs();
    }
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  auto add = [&](const DenseLayer& l) { n += static_cast<std::size_t>(l.weights.size() + l.bias.size()); };
  for (const auto& l : trunk_) add(l);
  for (const auto& h : heads_) {
    for (const auto& l : h.layers) add(l);
  }
  return n;
}

std::vector<double> Network::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto add = [&](const DenseLayer& l) {
    flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  };
  for (const auto& l : trunk_) add(l);
  for (const auto& h : heads_) {
    for (const auto& l : h.layers) add(l);
  }
  return flat;
}

void Network::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                                std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  auto take = [&](DenseLayer& l) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.data());
    pos += static_cast<std::size_t>(l.weights.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
    pos += static_cast<std::size_t>(l.bias.size());
  };
  for (auto& l : trunk_) take(l);
  for (auto& h : heads_) {
    for (auto& l : h.layers) take(l);
  }
}

namespace {

DenseLayer init_layer(Eigen::Index in, Eigen::Index out, Activation act, std::mt19937_64& rng) {
  DenseLayer layer(in, out, act);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
  return layer;
}

}  // namespace

Network make_network(const NetworkShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> trunk;
  Eigen::Index width = shape.input_width;
  for (auto w : shape.trunk_widths) {
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
    trunk.push_back(init_layer(width, w, shape.trunk_activation, rng));
    width = w;
  }
  std::vector<Head> heads;
  for (const auto& hs : shape.heads) {
    Head head;
    head.kind = hs.kind;
    Eigen::Index w = width;
    for (auto hidden : hs.hidden) {
      head.layers.push_back(init_layer(w, hidden, hs.hidden_activation, rng));
      w = hidden;
    }
    head.layers.push_back(init_layer(w, hs.outputs, Activation::identity, rng));
    heads.push_back(std::move(head));
  }
  return Network(shape.input_width, std::move(trunk), std::move(heads));
}

HeadShape head_for(const Target& target) {
  HeadShape h;
  h.kind = target.kind == ValueKind::continuous ? HeadKind::regression : HeadKind::classification;
  h.outputs = static_cast<Eigen::Index>(target.width());
  if (h.outputs < 1) throw std::invalid_argument("target has no columns or classes to predict");
  return h;
}

// ----------------------------------------------------------------- forward

ForwardCache forward_cached(const Network& net, const Matrix& x, bool include_heads) {
  check_input(net, x);
  ForwardCache cache;
  Matrix a = x;
  for (const auto& layer : net.trunk()) {
    cache.trunk_inputs.push_back(a);
    Matrix z = a * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    cache.trunk_pre.push_back(z);
    apply_activation(z, layer.activation);
    a = std::move(z);
  }
  cache.out.embedding = a;
  if (!include_heads) return cache;
  for (const auto& head : net.heads()) {
    auto& inputs = cache.head_inputs.emplace_back();
    auto& pres = cache.head_pre.emplace_back();
    Matrix h = cache.out.embedding;
    for (const auto& layer : head.layers) {
      inputs.push_back(h);
      Matrix z = h * layer.weights.transpose();
      z.rowwise() += layer.bias.transpose();
      pres.push_back(z);
      apply_activation(z, layer.activation);
      h = std::move(z);
    }
    cache.out.heads.push_back(std::move(h));
  }
  return cache;
}

Matrix embed(const Network& net, const Matrix& x) {
  check_input(net, x);
  Matrix a = x;
  for (const auto& layer : net.trunk()) a = layer.forward(a);
  return a;
}

Matrix head_forward(const Network& net, std::size_t head, const Matrix& embedding) {
  if (head >= net.heads().size()) throw std::out_of_range("no head " + std::to_string(head));
  if (embedding.cols() != net.embedding_width()) {
    throw std::invalid_argument("embedding width does not match the network");
  }
  Matrix h = embedding;
  for (const auto& layer : net.heads()[head].layers) h = layer.forward(h);
  return h;
}

ForwardResult forward(const Network& net, const Matrix& x) {
  ForwardResult r;
  r.embedding = embed(net, x);
  for (std::size_t h = 0; h < net.heads().size(); ++h) r.heads.push_back(head_forward(net, h, r.embedding));
  return r;
}

// ----------------------------------------------------------------- losses

LossGrad mse_with_grad(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: prediction is " + std::to_string(pred.rows()) + "x" +
                                std::to_string(pred.cols()) + ", target is " + std::to_string(target.rows()) +
                                "x" + std::to_string(target.cols()));
  }
  if (pred.size() == 0) throw std::invalid_argument("mse: empty input");
  const Matrix diff = pred - target;
  const auto count = static_cast<double>(diff.size());
  return {diff.squaredNorm() / count, (2.0 / count) * diff};
}

double loss_mse(const Matrix& pred, const Matrix& target) { return mse_with_grad(pred, target).value; }

LossGrad cross_entropy_with_grad(const Matrix& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw std::invalid_argument("cross entropy: " + std::to_string(logits.rows()) + " logit rows for " +
                                std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw std::invalid_argument("cross entropy: empty batch");
  const auto n = static_cast<double>(targets.size());
  LossGrad out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols()) {
      throw std::out_of_range("cross entropy: target " + std::to_string(t) + " outside [0, " +
                              std::to_string(logits.cols()) + ")");
    }
    const double m = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(r).array() - m;
    const Eigen::RowVectorXd e = shifted.array().exp();
    const double sum = e.sum();
    out.value += std::log(sum) - shifted(t);
    out.grad.row(r) = e / sum;
    out.grad(r, t) -= 1.0;
  }
  out.value /= n;
  out.grad /= n;
  return out;
}

double loss_cross_entropy(const Matrix& logits, std::span<const int> targets) {
  return cross_entropy_with_grad(logits, targets).value;
}

LossGrad target_loss(const Matrix& out, const Target& target) {
  return target.kind == ValueKind::continuous ? mse_with_grad(out, target.values)
                                              : cross_entropy_with_grad(out, target.classes);
}

double loss_multitask(const Matrix& out_y, const Target& target_y, const Matrix& out_e, const Target& target_e,
                      double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("multi-task weight must be >= 0");
  const double ly = target_loss(out_y, target_y).value;
  if (lambda == 0.0) return ly;
  return ly + lambda * target_loss(out_e, target_e).value;
}

// ----------------------------------------------------------------- backprop

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& l : net.trunk()) {
    g.trunk.push_back({Matrix::Zero(l.outputs(), l.inputs()), Vector::Zero(l.outputs())});
  }
  for (const auto& h : net.heads()) {
    auto& hg = g.heads.emplace_back();
    for (const auto& l : h.layers) hg.push_back({Matrix::Zero(l.outputs(), l.inputs()), Vector::Zero(l.outputs())});
  }
  return g;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  auto add = [&](const LayerGrad& l) {
    flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  };
  for (const auto& l : trunk) add(l);
  for (const auto& h : heads) {
    for (const auto& l : h) add(l);
  }
  return flat;
}

namespace {

// Walks `layers` backwards from `grad` (d loss / d layer output); returns the
// gradient w.r.t. the stack's input.
Matrix backprop_stack(const std::vector<DenseLayer>& layers, const std::vector<Matrix>& inputs,
                      const std::vector<Matrix>& pres, Matrix grad, std::vector<LayerGrad>& out) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    scale_by_activation_derivative(grad, pres[i], layers[i].activation);
    out[i].weights = grad.transpose() * inputs[i];
    out[i].bias = grad.colwise().sum().transpose();
    grad = grad * layers[i].weights;
  }
  return grad;
}

}  // namespace

Gradients backpropagate(const Network& net, const ForwardCache& cache, const OutputGrads& grads) {
  Gradients g = Gradients::zeros_like(net);
  const Matrix& emb = cache.out.embedding;
  Matrix emb_grad = Matrix::Zero(emb.rows(), emb.cols());
  bool any = false;
  if (grads.embedding.size() > 0) {
    if (grads.embedding.rows() != emb.rows() || grads.embedding.cols() != emb.cols()) {
      throw std::invalid_argument("embedding gradient shape mismatch");
    }
    emb_grad += grads.embedding;
    any = true;
  }
  for (std::size_t h = 0; h < grads.heads.size() && h < net.heads().size(); ++h) {
    const Matrix& hg = grads.heads[h];
    if (hg.size() == 0) continue;
    if (hg.rows() != cache.out.heads[h].rows() || hg.cols() != cache.out.heads[h].cols()) {
      throw std::invalid_argument("head gradient shape mismatch");
    }
    emb_grad += backprop_stack(net.heads()[h].layers, cache.head_inputs[h], cache.head_pre[h], hg, g.heads[h]);
    any = true;
  }
  if (any && !net.trunk().empty()) {
    backprop_stack(net.trunk(), cache.trunk_inputs, cache.trunk_pre, std::move(emb_grad), g.trunk);
  }
  return g;
}

LossAndGradients backward(const Network& net, const Matrix& x, const SupervisedLoss& spec) {
  if (spec.targets.size() != spec.weights.size()) {
    throw std::invalid_argument("supervised loss needs one weight per target");
  }
  if (spec.targets.size() > net.heads().size()) {
    throw std::invalid_argument("supervised loss names more targets than the network has heads");
  }
  const ForwardCache cache = forward_cached(net, x);
  OutputGrads og;
  og.heads.resize(net.heads().size());
  double loss = 0.0;
  for (std::size_t h = 0; h < spec.targets.size(); ++h) {
    const Target* t = spec.targets[h];
    const double w = spec.weights[h];
    if (t == nullptr || w == 0.0) continue;
    if (w < 0.0) throw std::invalid_argument("loss weights must be >= 0");
    LossGrad lg = target_loss(cache.out.heads[h], *t);
    loss += w * lg.value;
    og.heads[h] = w * lg.grad;
  }
  return {loss, backpropagate(net, cache, og)};
}

// ----------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (embedding_learning_rate && !(*embedding_learning_rate >= 0.0)) {
    throw std::invalid_argument("embedding learning rate must be >= 0");
  }
  if (!(multitask_weight >= 0.0)) throw std::invalid_argument("multi-task weight must be >= 0");
  if (dropout != 0.0) throw std::invalid_argument("dropout is not supported by dense networks here");
}

void apply_step(Network& net, const Gradients& g, const TrainConfig& config) {
  auto& trunk = net.trunk();
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    const bool is_embedding = i + 1 == trunk.size();
    const double rate =
        is_embedding && config.embedding_learning_rate ? *config.embedding_learning_rate : config.learning_rate;
    if (rate == 0.0) continue;
    trunk[i].weights -= rate * g.trunk[i].weights;
    trunk[i].bias -= rate * g.trunk[i].bias;
  }
  if (config.learning_rate == 0.0) return;
  for (std::size_t h = 0; h < net.heads().size(); ++h) {
    auto& layers = net.heads()[h].layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weights -= config.learning_rate * g.heads[h][i].weights;
      layers[i].bias -= config.learning_rate * g.heads[h][i].bias;
    }
  }
}

TrainResult train_sgd(Network net, std::size_t n_items, const TrainConfig& config,
                      const BatchObjective& objective) {
  config.validate();
  if (n_items == 0) throw std::invalid_argument("cannot train on zero items");
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::min(config.batch_size, n_items);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n_items) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_items; start += batch) {
      const std::size_t len = std::min(batch, n_items - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      LossAndGradients lg = objective(net, rows);
      if (!std::isfinite(lg.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches + 1) + "; try a smaller learning rate");
      }
      apply_step(net, lg.grads, config);
      epoch_loss += lg.loss;
      ++batches;
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.net = std::move(net);
  return result;
}

TrainResult train(Network net, const Matrix& x, const SupervisedLoss& loss, const TrainConfig& config) {
  for (const Target* t : loss.targets) {
    if (t != nullptr && t->rows() != static_cast<std::size_t>(x.rows())) {
      throw std::invalid_argument("targets and features disagree on sample count");
    }
  }
  auto objective = [&](const Network& current, std::span<const std::size_t> rows) {
    Matrix xb(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    std::vector<Target> parts;
    parts.reserve(loss.targets.size());
    SupervisedLoss batch_loss{{}, loss.weights};
    for (const Target* t : loss.targets) {
      if (t == nullptr) {
        batch_loss.targets.push_back(nullptr);
      } else {
        parts.push_back(t->subset(rows));
        batch_loss.targets.push_back(&parts.back());
      }
    }
    return backward(current, xb, batch_loss);
  };
  return train_sgd(std::move(net), static_cast<std::size_t>(x.rows()), config, objective);
}

// ----------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointMagic = "ted-network";

void write_layer(const DenseLayer& l, std::ostream& out) {
  out << "layer " << l.inputs() << " " << l.outputs() << " " << to_string(l.activation) << "\n";
  for (Eigen::Index i = 0; i < l.weights.size(); ++i) {
    out << (i ? " " : "") << detail::format_double(l.weights.data()[i]);
  }
  out << "\n";
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) out << (i ? " " : "") << detail::format_double(l.bias(i));
  out << "\n";
}

std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw FormatError("checkpoint ended early");
  return tok;
}

void expect(std::istream& in, const std::string& word) {
  const auto tok = next_token(in);
  if (tok != word) throw FormatError("checkpoint: expected '" + word + "', found '" + tok + "'");
}

long long read_count(std::istream& in) {
  const auto tok = next_token(in);
  double v = 0;
  if (!detail::parse_double(tok, v) || v < 0 || std::floor(v) != v) {
    throw FormatError("checkpoint: bad count '" + tok + "'");
  }
  return static_cast<long long>(v);
}

double read_value(std::istream& in) {
  const auto tok = next_token(in);
  double v = 0;
  if (!detail::parse_double(tok, v)) throw FormatError("checkpoint: bad number '" + tok + "'");
  return v;
}

DenseLayer read_layer(std::istream& in) {
  expect(in, "layer");
  const auto inputs = read_count(in);
  const auto outputs = read_count(in);
  DenseLayer l(inputs, outputs, parse_activation(next_token(in)));
  for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = read_value(in);
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = read_value(in);
  return l;
}

}  // namespace

void write_checkpoint(const Network& net, std::ostream& out) {
  out << kCheckpointMagic << " 1\n";
  out << "input " << net.input_width() << "\n";
  out << "trunk " << net.trunk().size() << "\n";
  for (const auto& l : net.trunk()) write_layer(l, out);
  out << "heads " << net.heads().size() << "\n";
  for (const auto& h : net.heads()) {
    out << "head " << (h.kind == HeadKind::regression ? "regression" : "classification") << " "
        << h.layers.size() << "\n";
    for (const auto& l : h.layers) write_layer(l, out);
  }
}

Network read_checkpoint(std::istream& in) {
  expect(in, kCheckpointMagic);
  expect(in, "1");
  expect(in, "input");
  const auto input = read_count(in);
  expect(in, "trunk");
  std::vector<DenseLayer> trunk(static_cast<std::size_t>(read_count(in)));
  for (auto& l : trunk) l = read_layer(in);
  expect(in, "heads");
  std::vector<Head> heads(static_cast<std::size_t>(read_count(in)));
  for (auto& h : heads) {
    expect(in, "head");
    const auto kind = next_token(in);
    if (kind == "regression") {
      h.kind = HeadKind::regression;
    } else if (kind == "classification") {
      h.kind = HeadKind::classification;
    } else {
      throw FormatError("checkpoint: unknown head kind '" + kind + "'");
    }
    h.layers.resize(static_cast<std::size_t>(read_count(in)));
    for (auto& l : h.layers) l = read_layer(in);
  }
  return Network(input, std::move(trunk), std::move(heads));
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(net, out);
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace ted

#include "ted/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ted::oracle {

void OracleTolerance::validate() const {
  if (!(gradient_rel > 0 && prediction_abs > 0 && fd_step > 0 && gradient_floor > 0)) {
    throw std::invalid_argument("oracle tolerances must be positive");
  }
}

ExhaustiveResult knn_exhaustive(const Matrix& points, std::span<const double> query, std::size_t k,
                                DistanceMetric metric) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = static_cast<std::size_t>(points.cols());
  if (query.size() != dim) throw std::invalid_argument("oracle knn: dimension mismatch");
  if (k > n) throw std::invalid_argument("oracle knn: k exceeds the number of points");

  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < n; ++i) {
    double dist = 0.0;
    if (metric == DistanceMetric::euclidean) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - query[j];
        dist += diff * diff;
      }
      dist = std::sqrt(dist);
    } else {
      double dot = 0.0, pp = 0.0, qq = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double p = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        dot += p * query[j];
        pp += p * p;
        qq += query[j] * query[j];
      }
      double c = (pp == 0.0 || qq == 0.0) ? 0.0 : dot / (std::sqrt(pp) * std::sqrt(qq));
      c = std::min(1.0, std::max(-1.0, c));
      dist = 1.0 - c;
    }
    all.emplace_back(dist, i);
  }
  std::sort(all.begin(), all.end());
  ExhaustiveResult out;
  for (std::size_t i = 0; i < k; ++i) {
    out.distances.push_back(all[i].first);
    out.indices.push_back(all[i].second);
  }
  return out;
}

std::vector<double> finite_difference_grad(const LossFunction& f, std::span<const double> params, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite difference step must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = f(p);
    p[i] = saved - step;
    const double down = f(p);
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("finite difference: non-finite loss at parameter " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

Vector least_squares_closed_form(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw std::invalid_argument("least squares: row mismatch");
  Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (!lu.isInvertible()) {
    xtx += 1e-9 * Eigen::MatrixXd::Identity(xtx.rows(), xtx.cols());
    return xtx.ldlt().solve(xty);
  }
  return lu.solve(xty);
}

double cosine_direct(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::min(1.0, std::max(-1.0, dot / (std::sqrt(aa) * std::sqrt(bb))));
}

double pair_loss_direct(std::span<const double> a, std::span<const double> b, PairRelation rel, double margin) {
  if (rel == PairRelation::excluded) return 0.0;
  const double c = cosine_direct(a, b);
  if (rel == PairRelation::neighbor) return 1.0 - c;
  return c > margin ? c - margin : 0.0;
}

double combined_loss_direct(std::span<const double> a, std::span<const double> b, PairRelation rel_y,
                            PairRelation rel_e, double m1, double m2, double w) {
  return pair_loss_direct(a, b, rel_y, m1) + w * pair_loss_direct(a, b, rel_e, m2);
}

std::vector<double> gaussian_weights_direct(std::span<const double> distances, double bandwidth) {
  std::vector<double> w;
  double total = 0.0;
  for (double d : distances) {
    w.push_back(std::exp(-(d * d) / (2.0 * bandwidth * bandwidth)));
    total += w.back();
  }
  for (auto& v : w) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(w.size());
  return w;
}

namespace {

std::vector<double> layer_direct(const DenseLayer& layer, const std::vector<double>& in, double* min_abs_pre) {
  const auto n_out = static_cast<std::size_t>(layer.weights.rows());
  std::vector<double> out(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    double s = layer.bias(static_cast<Eigen::Index>(o));
    for (std::size_t i = 0; i < in.size(); ++i) {
      s += layer.weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * in[i];
    }
    if (layer.activation == Activation::rectifier) {
      if (min_abs_pre) *min_abs_pre = std::min(*min_abs_pre, std::abs(s));
      s = s > 0.0 ? s : 0.0;
    }
    out[o] = s;
  }
  return out;
}

std::vector<std::vector<double>> embed_tracked(const Network& net, const Matrix& x, double* min_abs_pre) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> h(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) h[static_cast<std::size_t>(c)] = x(r, c);
    for (const auto& layer : net.trunk()) h = layer_direct(layer, h, min_abs_pre);
    rows.push_back(std::move(h));
  }
  return rows;
}

std::vector<std::vector<double>> head_tracked(const Network& net, std::size_t head,
                                              const std::vector<std::vector<double>>& embedding,
                                              double* min_abs_pre) {
  std::vector<std::vector<double>> rows;
  for (const auto& e : embedding) {
    std::vector<double> h = e;
    for (const auto& layer : net.heads().at(head).layers) h = layer_direct(layer, h, min_abs_pre);
    rows.push_back(std::move(h));
  }
  return rows;
}

}  // namespace

std::vector<std::vector<double>> embed_direct(const Network& net, const Matrix& x) {
  return embed_tracked(net, x, nullptr);
}

std::vector<std::vector<double>> head_direct(const Network& net, std::size_t head,
                                             const std::vector<std::vector<double>>& embedding) {
  return head_tracked(net, head, embedding, nullptr);
}

double mse_direct(const std::vector<std::vector<double>>& pred, const Matrix& target) {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    for (std::size_t c = 0; c < pred[r].size(); ++c) {
      const double d = pred[r][c] - target(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      s += d * d;
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

double cross_entropy_direct(const std::vector<std::vector<double>>& logits, std::span<const int> classes) {
  double s = 0.0;
  for (std::size_t r = 0; r < logits.size(); ++r) {
    double top = logits[r][0];
    for (double v : logits[r]) top = std::max(top, v);
    double z = 0.0;
    for (double v : logits[r]) z += std::exp(v - top);
    s += top + std::log(z) - logits[r][static_cast<std::size_t>(classes[r])];
  }
  return s / static_cast<double>(logits.size());
}

double supervised_loss_direct(const Network& net, const Matrix& x, const std::vector<const Target*>& targets,
                              const std::vector<double>& weights) {
  const auto emb = embed_direct(net, x);
  double total = 0.0;
  for (std::size_t h = 0; h < targets.size(); ++h) {
    if (targets[h] == nullptr || weights[h] == 0.0) continue;
    const auto out = head_direct(net, h, emb);
    const Target& t = *targets[h];
    total += weights[h] * (t.kind == ValueKind::continuous ? mse_direct(out, t.values)
                                                           : cross_entropy_direct(out, t.classes));
  }
  return total;
}

double pairwise_loss_direct(const Network& net, const Matrix& x, std::span<const PairRecord> pairs,
                            const LossParams& params, PairMode mode) {
  const auto emb = embed_direct(net, x);
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto& a = emb.at(p.a);
    const auto& b = emb.at(p.b);
    switch (mode) {
      case PairMode::y_only: total += pair_loss_direct(a, b, p.rel_y, params.m1); break;
      case PairMode::e_only: total += pair_loss_direct(a, b, p.rel_e, params.m2); break;
      case PairMode::y_and_e:
        total += combined_loss_direct(a, b, p.rel_y, p.rel_e, params.m1, params.m2, params.w);
        break;
    }
  }
  return total / static_cast<double>(pairs.size());
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient lengths differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// ----------------------------------------------------------------- gradcheck suite

namespace {

constexpr Eigen::Index kInput = 5;
constexpr Eigen::Index kHidden = 7;
constexpr Eigen::Index kEmbedding = 4;
constexpr Eigen::Index kBatch = 6;
constexpr double kKinkGuard = 1e-4;
constexpr double kMarginGuard = 1e-3;

DenseLayer random_layer(Eigen::Index in, Eigen::Index out, Activation act, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.7);
  DenseLayer l(in, out, act);
  for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.3 * normal(rng);
  return l;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

struct Instance {
  Network net;
  Matrix x;
  Target y;
  Target e;
  std::vector<PairRecord> pairs;
  LossParams params;
  double lambda = 1.0;
};

Instance draw_instance(const std::string& loss, std::mt19937_64& rng) {
  Instance in;
  const bool classify = loss == "cross_entropy";
  std::vector<DenseLayer> trunk{random_layer(kInput, kHidden, Activation::rectifier, rng),
                                random_layer(kHidden, kEmbedding, Activation::identity, rng)};
  Head hy;
  hy.kind = classify ? HeadKind::classification : HeadKind::regression;
  hy.layers = {random_layer(kEmbedding, 5, Activation::rectifier, rng),
               random_layer(5, classify ? 3 : 1, Activation::identity, rng)};
  Head he;
  he.layers = {random_layer(kEmbedding, 3, Activation::identity, rng)};
  in.net = Network(kInput, std::move(trunk), {hy, he});
  in.x = random_matrix(kBatch, kInput, rng);
  if (classify) {
    std::uniform_int_distribution<int> cls(0, 2);
    std::vector<int> c;
    for (Eigen::Index i = 0; i < kBatch; ++i) c.push_back(cls(rng));
    in.y = Target::categorical(c, 3);
  } else {
    in.y = Target::continuous(random_matrix(kBatch, 1, rng));
  }
  in.e = Target::continuous(random_matrix(kBatch, 3, rng));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> row(0, kBatch - 1);
  std::uniform_int_distribution<int> rel(0, 2);
  in.params = {unit(rng), unit(rng), 0.5 + 1.5 * unit(rng)};
  in.lambda = 0.1 + 2.9 * unit(rng);
  for (int i = 0; i < 10; ++i) {
    PairRecord p;
    p.a = row(rng);
    do p.b = row(rng); while (p.b == p.a);
    p.rel_y = static_cast<PairRelation>(rel(rng));
    p.rel_e = static_cast<PairRelation>(rel(rng));
    in.pairs.push_back(p);
  }
  return in;
}

bool near_kink(const Instance& in, const std::string& loss) {
  double min_pre = std::numeric_limits<double>::infinity();
  const auto emb = embed_tracked(in.net, in.x, &min_pre);
  for (std::size_t h = 0; h < in.net.heads().size(); ++h) head_tracked(in.net, h, emb, &min_pre);
  if (min_pre < kKinkGuard) return true;
  if (loss.rfind("pair", 0) != 0) return false;
  for (const auto& p : in.pairs) {
    const double c = cosine_direct(emb[p.a], emb[p.b]);
    if (p.rel_y == PairRelation::non_neighbor && std::abs(c - in.params.m1) < kMarginGuard) return true;
    if (p.rel_e == PairRelation::non_neighbor && std::abs(c - in.params.m2) < kMarginGuard) return true;
  }
  return false;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::size_t instances, std::uint64_t seed,
                                               const OracleTolerance& tol) {
  tol.validate();
  static const std::vector<std::string> losses = {"mse",    "cross_entropy", "multitask",
                                                  "pair_y", "pair_e",        "pair_combined"};
  std::vector<GradcheckCase> cases;
  for (const auto& loss : losses) {
    for (std::size_t i = 0; i < instances; ++i) {
      GradcheckCase gc;
      gc.loss = loss;
      gc.seed = derive_seed(seed, loss + ":" + std::to_string(i));
      std::mt19937_64 rng(gc.seed);
      Instance in = draw_instance(loss, rng);
      while (near_kink(in, loss)) in = draw_instance(loss, rng);

      const std::vector<const Target*> targets =
          loss == "multitask" ? std::vector<const Target*>{&in.y, &in.e} : std::vector<const Target*>{&in.y};
      const std::vector<double> weights =
          loss == "multitask" ? std::vector<double>{1.0, in.lambda} : std::vector<double>{1.0};
      const PairMode mode = loss == "pair_y"   ? PairMode::y_only
                            : loss == "pair_e" ? PairMode::e_only
                                               : PairMode::y_and_e;
      const bool pairwise = loss.rfind("pair", 0) == 0;

      const Gradients analytic = pairwise ? pairwise_backward(in.net, in.x, in.pairs, in.params, mode).grads
                                          : backward(in.net, in.x, SupervisedLoss{targets, weights}).grads;
      Network probe = in.net;
      const LossFunction f = [&](std::span<const double> p) {
        probe.set_parameters(p);
        return pairwise ? pairwise_loss_direct(probe, in.x, in.pairs, in.params, mode)
                        : supervised_loss_direct(probe, in.x, targets, weights);
      };
      const auto params = in.net.parameters();
      const auto numeric = finite_difference_grad(f, params, tol.fd_step);
      gc.parameters = params.size();
      gc.max_rel_error = max_relative_error(analytic.flatten(), numeric, tol.gradient_floor);
      gc.passed = gc.max_rel_error < tol.gradient_rel;
      cases.push_back(gc);
    }
  }
  return cases;
}

}  // namespace ted::oracle

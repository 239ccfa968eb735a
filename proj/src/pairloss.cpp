#include "ted/pairloss.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace ted {

std::string to_string(PairRelation r) {
  switch (r) {
    case PairRelation::neighbor: return "neighbor";
    case PairRelation::non_neighbor: return "non_neighbor";
    case PairRelation::excluded: return "excluded";
  }
  return "?";
}

PairRelation parse_pair_relation(const std::string& text) {
  if (text == "neighbor") return PairRelation::neighbor;
  if (text == "non_neighbor") return PairRelation::non_neighbor;
  if (text == "excluded") return PairRelation::excluded;
  throw FormatError("unknown pair relation '" + text + "'");
}

std::string to_string(PairMode m) {
  switch (m) {
    case PairMode::y_only: return "y_only";
    case PairMode::e_only: return "e_only";
    case PairMode::y_and_e: return "y_and_e";
  }
  return "?";
}

void NeighborSpec::validate() const {
  if (kind == ValueKind::categorical) return;
  if (!(c1 >= 0.0) || !(c2 >= c1)) throw std::invalid_argument("neighbor spec needs c2 >= c1 >= 0");
  if (!(c3 >= 0.0) || !(c4 >= c3)) throw std::invalid_argument("neighbor spec needs c4 >= c3 >= 0");
}

void LossParams::validate() const {
  if (!(m1 >= 0.0 && m1 <= 1.0) || !(m2 >= 0.0 && m2 <= 1.0)) {
    throw std::invalid_argument("margins must lie in [0, 1]");
  }
  if (!(w >= 0.0)) throw std::invalid_argument("E-loss weight must be >= 0");
}

// ----------------------------------------------------------------- cosine

namespace {

struct CosineParts {
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
};

CosineParts cosine_parts(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine: vectors have lengths " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  }
  CosineParts p;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    p.dot += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  p.norm_a = std::sqrt(saa);
  p.norm_b = std::sqrt(sbb);
  return p;
}

}  // namespace

CosineSimilarity cosine(std::span<const double> a, std::span<const double> b) {
  const auto p = cosine_parts(a, b);
  if (p.norm_a == 0.0 || p.norm_b == 0.0) return {0.0, true};
  return {std::clamp(p.dot / (p.norm_a * p.norm_b), -1.0, 1.0), false};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine(a, b).value; }

// ----------------------------------------------------------------- relations

PairRelation relation_continuous(std::span<const double> ya, std::span<const double> yb, double c_lo,
                                 double c_hi) {
  if (ya.size() != yb.size()) throw std::invalid_argument("relation: value vectors differ in length");
  if (!(c_hi >= c_lo)) throw std::invalid_argument("relation: c_hi must be >= c_lo");
  double d = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) d += std::abs(ya[i] - yb[i]);
  if (d <= c_lo) return PairRelation::neighbor;
  if (d > c_hi) return PairRelation::non_neighbor;
  return PairRelation::excluded;
}

PairRelation relation_categorical(int y_a, int y_b, int e_a, int e_b, Space space) {
  if (space == Space::y) return y_a == y_b ? PairRelation::neighbor : PairRelation::non_neighbor;
  if (e_a == e_b) return PairRelation::neighbor;
  if (y_a != y_b) return PairRelation::non_neighbor;
  return PairRelation::excluded;
}

// ----------------------------------------------------------------- losses

double pair_loss(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double margin) {
  switch (rel) {
    case PairRelation::neighbor: return 1.0 - cosine_similarity(fa, fb);
    case PairRelation::non_neighbor: return std::max(cosine_similarity(fa, fb) - margin, 0.0);
    case PairRelation::excluded: return 0.0;
  }
  return 0.0;
}

double loss_xy(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double m1) {
  return pair_loss(fa, fb, rel, m1);
}

double loss_xe(std::span<const double> fa, std::span<const double> fb, PairRelation rel, double m2) {
  return pair_loss(fa, fb, rel, m2);
}

double loss_combined(std::span<const double> fa, std::span<const double> fb, PairRelation rel_y,
                     PairRelation rel_e, const LossParams& params) {
  const double ly = loss_xy(fa, fb, rel_y, params.m1);
  if (params.w == 0.0) return ly;
  return ly + params.w * loss_xe(fa, fb, rel_e, params.m2);
}

double loss_for_mode(std::span<const double> fa, std::span<const double> fb, const PairRecord& pair,
                     const LossParams& params, PairMode mode) {
  switch (mode) {
    case PairMode::y_only: return loss_xy(fa, fb, pair.rel_y, params.m1);
    case PairMode::e_only: return loss_xe(fa, fb, pair.rel_e, params.m2);
    case PairMode::y_and_e: return loss_combined(fa, fb, pair.rel_y, pair.rel_e, params);
  }
  return 0.0;
}

PairLossGrad pair_loss_grad(std::span<const double> fa, std::span<const double> fb, PairRelation rel,
                            double margin) {
  const auto n = static_cast<Eigen::Index>(fa.size());
  PairLossGrad out{0.0, Vector::Zero(n), Vector::Zero(n), false};
  if (rel == PairRelation::excluded) return out;
  const auto p = cosine_parts(fa, fb);
  if (p.norm_a == 0.0 || p.norm_b == 0.0) {
    out.zero_norm = true;
    out.loss = pair_loss(fa, fb, rel, margin);
    return out;
  }
  const double raw = p.dot / (p.norm_a * p.norm_b);
  const double c = std::clamp(raw, -1.0, 1.0);
  double sign = 0.0;
  if (rel == PairRelation::neighbor) {
    out.loss = 1.0 - c;
    sign = -1.0;
  } else {
    out.loss = std::max(c - margin, 0.0);
    sign = c > margin ? 1.0 : 0.0;
  }
  if (sign == 0.0) return out;
  const Eigen::Map<const Vector> a(fa.data(), n);
  const Eigen::Map<const Vector> b(fb.data(), n);
  const double inv = 1.0 / (p.norm_a * p.norm_b);
  out.grad_a = sign * (b * inv - raw * a / (p.norm_a * p.norm_a));
  out.grad_b = sign * (a * inv - raw * b / (p.norm_b * p.norm_b));
  return out;
}

PairLossGrad mode_loss_grad(std::span<const double> fa, std::span<const double> fb, const PairRecord& pair,
                            const LossParams& params, PairMode mode) {
  switch (mode) {
    case PairMode::y_only: return pair_loss_grad(fa, fb, pair.rel_y, params.m1);
    case PairMode::e_only: return pair_loss_grad(fa, fb, pair.rel_e, params.m2);
    case PairMode::y_and_e: {
      PairLossGrad gy = pair_loss_grad(fa, fb, pair.rel_y, params.m1);
      if (params.w == 0.0) return gy;
      const PairLossGrad ge = pair_loss_grad(fa, fb, pair.rel_e, params.m2);
      gy.loss += params.w * ge.loss;
      gy.grad_a += params.w * ge.grad_a;
      gy.grad_b += params.w * ge.grad_b;
      gy.zero_norm = gy.zero_norm || ge.zero_norm;
      return gy;
    }
  }
  return {};
}

// ----------------------------------------------------------------- sampling

PairRecord relate(const Dataset& d, std::size_t a, std::size_t b, const NeighborSpec& spec) {
  PairRecord r{a, b, PairRelation::excluded, PairRelation::excluded};
  const auto ia = static_cast<Eigen::Index>(a);
  const auto ib = static_cast<Eigen::Index>(b);
  if (spec.kind == ValueKind::continuous) {
    if (d.labels.kind != ValueKind::continuous) {
      throw std::invalid_argument("continuous neighbor spec needs continuous labels");
    }
    r.rel_y = relation_continuous(row_span(d.labels.values, ia), row_span(d.labels.values, ib), spec.c1, spec.c2);
    if (d.has_explanations()) {
      if (d.explanations.kind != ValueKind::continuous) {
        throw std::invalid_argument("continuous neighbor spec needs continuous explanations");
      }
      r.rel_e = relation_continuous(row_span(d.explanations.values, ia), row_span(d.explanations.values, ib),
                                    spec.c3, spec.c4);
    }
  } else {
    if (d.labels.kind != ValueKind::categorical) {
      throw std::invalid_argument("categorical neighbor spec needs categorical labels");
    }
    const int ya = d.labels.classes[a];
    const int yb = d.labels.classes[b];
    r.rel_y = relation_categorical(ya, yb, 0, 0, Space::y);
    if (d.has_explanations()) {
      if (d.explanations.kind != ValueKind::categorical) {
        throw std::invalid_argument("categorical neighbor spec needs categorical explanations");
      }
      r.rel_e = relation_categorical(ya, yb, d.explanations.classes[a], d.explanations.classes[b], Space::e);
    }
  }
  return r;
}

namespace {

bool carries_loss(const PairRecord& r, PairMode mode) {
  switch (mode) {
    case PairMode::y_only: return r.rel_y != PairRelation::excluded;
    case PairMode::e_only: return r.rel_e != PairRelation::excluded;
    case PairMode::y_and_e: return r.rel_y != PairRelation::excluded || r.rel_e != PairRelation::excluded;
  }
  return false;
}

PairRelation primary_relation(const PairRecord& r, PairMode mode) {
  return mode == PairMode::e_only ? r.rel_e : r.rel_y;
}

}  // namespace

PairBatch sample_pairs(const Dataset& d, const NeighborSpec& spec, std::size_t n_pairs, std::uint64_t seed,
                       const SamplingOptions& options) {
  spec.validate();
  const auto train = d.indices_of(Split::train);
  if (train.size() < 2) throw std::invalid_argument("pair sampling needs at least 2 training samples");
  if (options.mode != PairMode::y_only && !d.has_explanations()) {
    throw std::invalid_argument("pair mode " + to_string(options.mode) + " needs explanations");
  }

  PairBatch batch;
  batch.seed = seed;
  batch.pairs.reserve(n_pairs);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  const std::size_t max_draws = 100 * n_pairs;
  PairRelation want = PairRelation::neighbor;
  for (std::size_t draws = 0; batch.pairs.size() < n_pairs; ++draws) {
    if (draws >= max_draws) {
      throw std::runtime_error("pair sampling kept " + std::to_string(batch.pairs.size()) + " of " +
                               std::to_string(n_pairs) + " pairs after " + std::to_string(max_draws) +
                               " draws; the neighbor spec excludes nearly every pair");
    }
    const std::size_t a = train[pick(rng)];
    const std::size_t b = train[pick(rng)];
    if (a == b) continue;
    const PairRecord r = relate(d, a, b, spec);
    if (!carries_loss(r, options.mode)) continue;
    if (options.balanced) {
      if (primary_relation(r, options.mode) != want) continue;
      want = want == PairRelation::neighbor ? PairRelation::non_neighbor : PairRelation::neighbor;
    }
    batch.pairs.push_back(r);
  }
  return batch;
}

// ----------------------------------------------------------------- training

LossAndGradients pairwise_backward(const Network& net, const Matrix& x, std::span<const PairRecord> pairs,
                                   const LossParams& params, PairMode mode, std::size_t* zero_norm_events) {
  if (pairs.empty()) throw std::invalid_argument("pairwise loss over an empty pair list");
  // Embed each referenced row once.
  std::unordered_map<std::size_t, Eigen::Index> local;
  std::vector<std::size_t> rows;
  for (const auto& p : pairs) {
    for (auto r : {p.a, p.b}) {
      if (r >= static_cast<std::size_t>(x.rows())) throw std::out_of_range("pair references a missing row");
      if (local.emplace(r, static_cast<Eigen::Index>(rows.size())).second) rows.push_back(r);
    }
  }
  Matrix xb(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  const ForwardCache cache = forward_cached(net, xb, false);
  const Matrix& f = cache.out.embedding;

  OutputGrads og;
  og.embedding = Matrix::Zero(f.rows(), f.cols());
  const double scale = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  for (const auto& p : pairs) {
    const auto ia = local.at(p.a);
    const auto ib = local.at(p.b);
    const PairLossGrad g = mode_loss_grad(row_span(f, ia), row_span(f, ib), p, params, mode);
    if (g.zero_norm && zero_norm_events != nullptr) ++*zero_norm_events;
    loss += g.loss;
    og.embedding.row(ia) += scale * g.grad_a.transpose();
    og.embedding.row(ib) += scale * g.grad_b.transpose();
  }
  return {loss * scale, backpropagate(net, cache, og)};
}

LossAndGradients pairwise_backward(const Network& net, const Matrix& x, std::span<const PairRecord> pairs,
                                   const LossParams& params, PairMode mode) {
  return pairwise_backward(net, x, pairs, params, mode, nullptr);
}

PairwiseTrainResult train_pairwise(Network net, const Matrix& x, const PairBatch& pairs, const LossParams& params,
                                   const TrainConfig& config, PairMode mode) {
  params.validate();
  if (net.trunk().empty()) throw std::invalid_argument("pairwise training needs a trunk to shape");
  PairwiseTrainResult result;
  std::vector<PairRecord> scratch;
  auto objective = [&](const Network& current, std::span<const std::size_t> items) {
    scratch.clear();
    for (auto i : items) scratch.push_back(pairs.pairs[i]);
    return pairwise_backward(current, x, scratch, params, mode, &result.zero_norm_events);
  };
  result.train = train_sgd(std::move(net), pairs.pairs.size(), config, objective);
  return result;
}

// ----------------------------------------------------------------- files

void write_pairs(const PairBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# ted-pairs seed " << batch.seed << " count " << batch.pairs.size() << "\n";
  for (const auto& p : batch.pairs) {
    out << p.a << " " << p.b << " " << to_string(p.rel_y) << " " << to_string(p.rel_e) << "\n";
  }
}

PairBatch read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pair file " + path.string());
  PairBatch batch;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty pair file " + path.string());
  {
    std::istringstream head(line);
    std::string hash, magic, seed_word, count_word;
    std::size_t count = 0;
    if (!(head >> hash >> magic >> seed_word >> batch.seed >> count_word >> count) || magic != "ted-pairs") {
      throw FormatError("pair file " + path.string() + " has a malformed header");
    }
    batch.pairs.reserve(count);
  }
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    PairRecord r;
    std::string ry, re;
    if (!(ls >> r.a >> r.b >> ry >> re)) throw FormatError("malformed pair line: " + line);
    r.rel_y = parse_pair_relation(ry);
    r.rel_e = parse_pair_relation(re);
    batch.pairs.push_back(r);
  }
  return batch;
}

}  // namespace ted

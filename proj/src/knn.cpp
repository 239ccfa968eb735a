#include "ted/knn.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ted {

namespace {
constexpr double kBandwidthFloor = 1e-12;
}

std::string to_string(DistanceMetric m) { return m == DistanceMetric::cosine ? "cosine" : "euclidean"; }

DistanceMetric parse_distance_metric(const std::string& text) {
  const auto t = std::string(detail::trim(text));
  if (t == "cosine") return DistanceMetric::cosine;
  if (t == "euclidean") return DistanceMetric::euclidean;
  throw std::invalid_argument("unknown distance metric '" + t + "'");
}

double embedding_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: vectors differ in length");
  if (metric == DistanceMetric::euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double dot = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  if (saa == 0.0 || sbb == 0.0) return 1.0;
  return 1.0 - std::clamp(dot / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

std::vector<double> gaussian_weights(std::span<const double> distances, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("gaussian bandwidth must be positive");
  std::vector<double> w(distances.size());
  double sum = 0.0;
  const double denom = 2.0 * bandwidth * bandwidth;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] < 0.0) throw std::invalid_argument("distances must be non-negative");
    w[i] = std::exp(-distances[i] * distances[i] / denom);
    sum += w[i];
  }
  if (sum == 0.0 || !std::isfinite(sum)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (auto& x : w) x /= sum;
  return w;
}

NeighborIndex::NeighborIndex(Matrix embeddings, Target labels, Target explanations, DistanceMetric metric,
                             BandwidthPolicy bandwidth)
    : embeddings_(std::move(embeddings)),
      labels_(std::move(labels)),
      explanations_(std::move(explanations)),
      metric_(metric),
      bandwidth_(bandwidth) {
  if (embeddings_.rows() == 0) throw std::invalid_argument("cannot build a neighbor index from zero rows");
  if (embeddings_.cols() == 0) throw std::invalid_argument("embeddings need at least one dimension");
  const auto n = size();
  if (labels_.rows() != n) throw std::invalid_argument("label rows do not match embedding rows");
  if (explanations_.rows() != n && explanations_.rows() != 0) {
    throw std::invalid_argument("explanation rows do not match embedding rows");
  }
  if (bandwidth_.fixed && !(*bandwidth_.fixed > 0.0)) {
    throw std::invalid_argument("fixed bandwidth must be positive");
  }
}

NeighborIndex build_index(Matrix embeddings, Target labels, Target explanations, DistanceMetric metric,
                          BandwidthPolicy bandwidth) {
  return NeighborIndex(std::move(embeddings), std::move(labels), std::move(explanations), metric, bandwidth);
}

Neighborhood NeighborIndex::query(std::span<const double> f, std::size_t k) const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (static_cast<Eigen::Index>(f.size()) != dimension()) {
    throw std::invalid_argument("query has dimension " + std::to_string(f.size()) + ", index holds " +
                                std::to_string(dimension()));
  }
  const auto n = size();
  std::vector<std::pair<double, std::size_t>> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    all[i] = {embedding_distance(f, row_span(embeddings_, static_cast<Eigen::Index>(i)), metric_), i};
  }
  const auto take = std::min(k, n);
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());

  Neighborhood nb;
  for (std::size_t i = 0; i < take; ++i) {
    nb.distances.push_back(all[i].first);
    nb.indices.push_back(all[i].second);
  }
  double sigma = 0.0;
  if (bandwidth_.fixed) {
    sigma = *bandwidth_.fixed;
  } else {
    const auto& d = nb.distances;
    sigma = take % 2 == 1 ? d[take / 2] : 0.5 * (d[take / 2 - 1] + d[take / 2]);
    sigma = std::max(sigma, kBandwidthFloor);
  }
  nb.weights = gaussian_weights(nb.distances, sigma);
  return nb;
}

Vector predict_continuous(const Neighborhood& nbhd, const Matrix& values) {
  if (nbhd.indices.size() != nbhd.weights.size()) throw std::invalid_argument("neighborhood is inconsistent");
  Vector out = Vector::Zero(values.cols());
  for (std::size_t i = 0; i < nbhd.indices.size(); ++i) {
    if (nbhd.indices[i] >= static_cast<std::size_t>(values.rows())) {
      throw std::out_of_range("neighbor index beyond the stored values");
    }
    out += nbhd.weights[i] * values.row(static_cast<Eigen::Index>(nbhd.indices[i])).transpose();
  }
  return out;
}

int predict_categorical(const Neighborhood& nbhd, std::span<const int> classes, int n_classes, Voting voting) {
  if (n_classes < 1) throw std::invalid_argument("need at least one class");
  std::vector<double> score(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t i = 0; i < nbhd.indices.size(); ++i) {
    if (nbhd.indices[i] >= classes.size()) throw std::out_of_range("neighbor index beyond the stored classes");
    const int c = classes[nbhd.indices[i]];
    if (c < 0 || c >= n_classes) throw std::out_of_range("stored class outside [0, n_classes)");
    score[static_cast<std::size_t>(c)] += voting == Voting::kernel ? nbhd.weights[i] : 1.0;
  }
  // max_element returns the first maximum, i.e. the lowest class index.
  return static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
}

KnnPrediction predict_batch(const NeighborIndex& index, const Matrix& queries, std::size_t k, Voting voting) {
  const auto n = queries.rows();
  const Target& ly = index.labels();
  const Target& le = index.explanations();
  KnnPrediction out;
  out.labels.kind = ly.kind;
  out.labels.n_classes = ly.n_classes;
  out.explanations.kind = le.kind;
  out.explanations.n_classes = le.n_classes;
  if (ly.kind == ValueKind::continuous) out.labels.values.resize(n, ly.values.cols());
  const bool have_e = le.rows() > 0 && le.width() > 0;
  if (have_e && le.kind == ValueKind::continuous) out.explanations.values.resize(n, le.values.cols());
  if (!have_e && le.kind == ValueKind::continuous) out.explanations.values.resize(n, 0);

  for (Eigen::Index q = 0; q < n; ++q) {
    const Neighborhood nb = index.query(row_span(queries, q), k);
    if (ly.kind == ValueKind::continuous) {
      out.labels.values.row(q) = predict_continuous(nb, ly.values).transpose();
    } else {
      out.labels.classes.push_back(predict_categorical(nb, ly.classes, ly.n_classes, voting));
    }
    if (!have_e) continue;
    if (le.kind == ValueKind::continuous) {
      out.explanations.values.row(q) = predict_continuous(nb, le.values).transpose();
    } else {
      out.explanations.classes.push_back(predict_categorical(nb, le.classes, le.n_classes, voting));
    }
  }
  return out;
}

// ----------------------------------------------------------------- persistence

namespace {

void write_target(std::ostream& out, const std::string& name, const Target& t) {
  out << name << " " << to_string(t.kind) << " " << t.rows() << " ";
  if (t.kind == ValueKind::continuous) {
    out << t.values.cols() << "\n";
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
        out << (c ? " " : "") << detail::format_double(t.values(r, c));
      }
      out << "\n";
    }
  } else {
    out << t.n_classes << "\n";
    for (std::size_t i = 0; i < t.classes.size(); ++i) out << (i ? " " : "") << t.classes[i];
    out << "\n";
  }
}

double read_number(std::istream& in) {
  std::string tok;
  double v = 0.0;
  if (!(in >> tok) || !detail::parse_double(tok, v)) throw FormatError("index file: bad number '" + tok + "'");
  return v;
}

Target read_target(std::istream& in, const std::string& name) {
  std::string tag, kind;
  std::size_t rows = 0;
  if (!(in >> tag >> kind >> rows) || tag != name) throw FormatError("index file: expected block " + name);
  const auto vk = parse_value_kind(kind);
  if (vk == ValueKind::continuous) {
    std::size_t cols = 0;
    in >> cols;
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_number(in);
    return Target::continuous(std::move(m));
  }
  int n_classes = 0;
  in >> n_classes;
  std::vector<int> classes(rows);
  for (auto& c : classes) {
    if (!(in >> c)) throw FormatError("index file: bad class entry");
  }
  return Target::categorical(std::move(classes), n_classes);
}

}  // namespace

void NeighborIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ted-index 1\n";
  out << "metric " << to_string(metric_) << "\n";
  out << "bandwidth " << (bandwidth_.fixed ? detail::format_double(*bandwidth_.fixed) : "median") << "\n";
  out << "embeddings " << embeddings_.rows() << " " << embeddings_.cols() << "\n";
  for (Eigen::Index r = 0; r < embeddings_.rows(); ++r) {
    for (Eigen::Index c = 0; c < embeddings_.cols(); ++c) {
      out << (c ? " " : "") << detail::format_double(embeddings_(r, c));
    }
    out << "\n";
  }
  write_target(out, "labels", labels_);
  write_target(out, "explanations", explanations_);
}

NeighborIndex NeighborIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open index " + path.string());
  std::string magic, version, word, metric, bw;
  if (!(in >> magic >> version) || magic != "ted-index" || version != "1") {
    throw FormatError(path.string() + " is not a neighbor index file");
  }
  in >> word >> metric >> word >> bw;
  BandwidthPolicy policy;
  if (bw != "median") {
    double v = 0;
    if (!detail::parse_double(bw, v)) throw FormatError("index file: bad bandwidth");
    policy.fixed = v;
  }
  std::size_t rows = 0, cols = 0;
  in >> word >> rows >> cols;
  Matrix emb(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = read_number(in);
  Target labels = read_target(in, "labels");
  Target expl = read_target(in, "explanations");
  return NeighborIndex(std::move(emb), std::move(labels), std::move(expl), parse_distance_metric(metric), policy);
}

}  // namespace ted

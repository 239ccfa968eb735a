#include "ted/dataset.hpp"

#include "text_util.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ted {

namespace {

constexpr double kDegenerateStd = 1e-12;

std::string describe_cell(std::size_t line, const std::string& column) {
  return "line " + std::to_string(line) + ", column '" + column + "'";
}

}  // namespace

std::string to_string(ValueKind kind) {
  return kind == ValueKind::continuous ? "continuous" : "categorical";
}

ValueKind parse_value_kind(const std::string& text) {
  const auto t = std::string(detail::trim(text));
  if (t == "continuous") return ValueKind::continuous;
  if (t == "categorical") return ValueKind::categorical;
  throw std::invalid_argument("unknown value kind '" + t + "' (expected continuous or categorical)");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------- Target

Target Target::continuous(Matrix values) {
  Target t;
  t.kind = ValueKind::continuous;
  t.values = std::move(values);
  return t;
}

Target Target::categorical(std::vector<int> classes, int n_classes) {
  for (int c : classes) {
    if (c < 0 || c >= n_classes) {
      throw std::invalid_argument("class index " + std::to_string(c) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
    }
  }
  Target t;
  t.kind = ValueKind::categorical;
  t.classes = std::move(classes);
  t.n_classes = n_classes;
  return t;
}

std::size_t Target::rows() const {
  return kind == ValueKind::continuous ? static_cast<std::size_t>(values.rows()) : classes.size();
}

std::size_t Target::width() const {
  return kind == ValueKind::continuous ? static_cast<std::size_t>(values.cols())
                                       : static_cast<std::size_t>(n_classes);
}

Target Target::subset(std::span<const std::size_t> rows) const {
  Target out;
  out.kind = kind;
  out.n_classes = n_classes;
  if (kind == ValueKind::continuous) {
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    }
  } else {
    out.classes.reserve(rows.size());
    for (auto r : rows) out.classes.push_back(classes.at(r));
  }
  return out;
}

// ---------------------------------------------------------------- Dataset

std::vector<std::size_t> Dataset::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.splits.push_back(splits.at(rows[i]));
  }
  out.labels = labels.subset(rows);
  out.explanations = explanations.subset(rows);
  out.feature_names = feature_names;
  out.explanation_names = explanation_names;
  out.label_name = label_name;
  return out;
}

Dataset Dataset::split_part(Split split) const {
  const auto rows = indices_of(split);
  return subset(rows);
}

void Dataset::validate() const {
  const auto n = samples();
  if (labels.rows() != n) {
    throw std::invalid_argument("label rows (" + std::to_string(labels.rows()) +
                                ") do not match feature rows (" + std::to_string(n) + ")");
  }
  if (explanations.rows() != n && !(explanations.rows() == 0 && explanations.width() == 0)) {
    throw std::invalid_argument("explanation rows (" + std::to_string(explanations.rows()) +
                                ") do not match feature rows (" + std::to_string(n) + ")");
  }
  if (splits.size() != n) {
    throw std::invalid_argument("every sample needs exactly one split tag");
  }
  if (!feature_names.empty() && feature_names.size() != n_features()) {
    throw std::invalid_argument("feature name count does not match feature columns");
  }
  for (const Target* t : {&labels, &explanations}) {
    if (t->kind == ValueKind::categorical) {
      for (int c : t->classes) {
        if (c < 0 || c >= t->n_classes) throw std::invalid_argument("class index out of range");
      }
    }
  }
}

// ---------------------------------------------------------------- CSV + schema

CsvSchema load_schema(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("schema file not found: " + path.string());
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw FormatError("malformed schema " + path.string() + ": " + e.message());
  }
  CsvSchema s;
  s.label_column = std::string(detail::trim(tree.get<std::string>("label_column", "")));
  if (s.label_column.empty()) throw FormatError("schema " + path.string() + " lacks label_column");
  s.explanation_columns = detail::split_list(tree.get<std::string>("explanation_columns", ""));
  const auto features = std::string(detail::trim(tree.get<std::string>("feature_columns", "rest")));
  if (features != "rest") s.feature_columns = detail::split_list(features);
  s.label_kind = parse_value_kind(tree.get<std::string>("label_kind", "continuous"));
  s.explanation_kind = parse_value_kind(tree.get<std::string>("explanation_kind", "continuous"));
  return s;
}

void write_schema(const CsvSchema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  out << "label_column = " << schema.label_column << "\n";
  out << "explanation_columns = " << join(schema.explanation_columns) << "\n";
  out << "feature_columns = " << (schema.feature_columns.empty() ? "rest" : join(schema.feature_columns))
      << "\n";
  out << "label_kind = " << to_string(schema.label_kind) << "\n";
  out << "explanation_kind = " << to_string(schema.explanation_kind) << "\n";
}

namespace {

Target make_target(ValueKind kind, const std::vector<std::vector<double>>& columns, std::size_t n,
                   const std::vector<std::string>& names) {
  if (columns.empty()) return Target::continuous(Matrix(static_cast<Eigen::Index>(n), 0));
  if (kind == ValueKind::continuous) {
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      for (std::size_t r = 0; r < n; ++r) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
      }
    }
    return Target::continuous(std::move(m));
  }
  if (columns.size() != 1) {
    throw FormatError("a categorical target must be a single column");
  }
  std::vector<int> classes;
  classes.reserve(n);
  int max_class = -1;
  for (double v : columns[0]) {
    if (v < 0 || std::floor(v) != v) {
      throw FormatError("column '" + names[0] + "' holds a non-integer or negative class " +
                        detail::format_double(v));
    }
    classes.push_back(static_cast<int>(v));
    max_class = std::max(max_class, classes.back());
  }
  return Target::categorical(std::move(classes), max_class + 1);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset: " + path.string() + " has no header");
  const auto header = detail::split(line, ',');
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) column_of.emplace(header[i], i);

  auto find = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw FormatError("column '" + name + "' named in schema is absent from " + path.string());
    }
    return it->second;
  };

  const std::size_t label_col = find(schema.label_column);
  std::vector<std::size_t> expl_cols;
  for (const auto& name : schema.explanation_columns) expl_cols.push_back(find(name));
  std::vector<std::size_t> feat_cols;
  std::vector<std::string> feat_names;
  if (schema.feature_columns.empty()) {
    std::set<std::size_t> taken(expl_cols.begin(), expl_cols.end());
    taken.insert(label_col);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!taken.count(i)) {
        feat_cols.push_back(i);
        feat_names.push_back(header[i]);
      }
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feat_cols.push_back(find(name));
      feat_names.push_back(name);
    }
  }
  if (feat_cols.empty()) throw FormatError("schema selects no feature columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != header.size()) {
      throw FormatError("ragged row at line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], values[c])) {
        throw FormatError("non-numeric cell '" + cells[c] + "' at " + describe_cell(line_no, header[c]));
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError("empty dataset: " + path.string() + " has no data rows");

  const std::size_t n = rows.size();
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feat_cols.size()));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < feat_cols.size(); ++c) {
      d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][feat_cols[c]];
    }
  }
  auto column = [&](std::size_t c) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = rows[r][c];
    return v;
  };
  d.labels = make_target(schema.label_kind, {column(label_col)}, n, {schema.label_column});
  std::vector<std::vector<double>> expl;
  for (auto c : expl_cols) expl.push_back(column(c));
  d.explanations = make_target(schema.explanation_kind, expl, n, schema.explanation_columns);
  d.splits.assign(n, Split::train);
  d.feature_names = std::move(feat_names);
  d.explanation_names = schema.explanation_columns;
  d.label_name = schema.label_column;
  d.validate();
  return d;
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto nf = d.n_features();
  for (std::size_t c = 0; c < nf; ++c) {
    out << (c < d.feature_names.size() ? d.feature_names[c] : "x" + std::to_string(c)) << ",";
  }
  out << (d.label_name.empty() ? "y" : d.label_name);
  const bool expl_cat = d.explanations.kind == ValueKind::categorical;
  const std::size_t n_expl = expl_cat ? (d.explanations.rows() ? 1 : 0)
                                      : static_cast<std::size_t>(d.explanations.values.cols());
  for (std::size_t c = 0; c < n_expl; ++c) {
    out << "," << (c < d.explanation_names.size() ? d.explanation_names[c] : "e" + std::to_string(c));
  }
  out << "\n";
  for (std::size_t r = 0; r < d.samples(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < nf; ++c) {
      out << detail::format_double(d.features(ri, static_cast<Eigen::Index>(c))) << ",";
    }
    if (d.labels.kind == ValueKind::categorical) {
      out << d.labels.classes[r];
    } else {
      out << detail::format_double(d.labels.values(ri, 0));
    }
    for (std::size_t c = 0; c < n_expl; ++c) {
      out << ",";
      if (expl_cat) {
        out << d.explanations.classes[r];
      } else {
        out << detail::format_double(d.explanations.values(ri, static_cast<Eigen::Index>(c)));
      }
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------- transforms

Dataset log_transform(const Dataset& d) {
  Dataset out = d;
  for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
      const double shifted = 100.0 + out.features(r, c);
      if (!(shifted > 0.0)) {
        throw std::domain_error("log transform needs 100 + x > 0; row " + std::to_string(r) +
                                ", feature " + std::to_string(c) + " has x = " +
                                detail::format_double(out.features(r, c)));
      }
      out.features(r, c) = std::log10(shifted);
    }
  }
  return out;
}

std::pair<Dataset, StandardizationStats> standardize(const Dataset& d,
                                                     const std::optional<StandardizationStats>& stats) {
  StandardizationStats s;
  if (stats) {
    s = *stats;
    if (static_cast<std::size_t>(s.mean.size()) != d.n_features() ||
        static_cast<std::size_t>(s.stddev.size()) != d.n_features()) {
      throw std::invalid_argument("standardization stats do not match feature count");
    }
  } else {
    const auto train = d.indices_of(Split::train);
    if (train.empty()) throw std::invalid_argument("cannot standardize: training split is empty");
    const auto nf = static_cast<Eigen::Index>(d.n_features());
    s.mean = Vector::Zero(nf);
    s.stddev = Vector::Zero(nf);
    for (auto r : train) s.mean += d.features.row(static_cast<Eigen::Index>(r)).transpose();
    s.mean /= static_cast<double>(train.size());
    for (auto r : train) {
      s.stddev += (d.features.row(static_cast<Eigen::Index>(r)).transpose() - s.mean).array().square().matrix();
    }
    s.stddev = (s.stddev / static_cast<double>(train.size())).array().sqrt();
    for (Eigen::Index c = 0; c < nf; ++c) {
      if (s.stddev(c) < kDegenerateStd) s.stddev(c) = 1.0;
    }
  }
  Dataset out = d;
  for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
    out.features.row(r) = (out.features.row(r) - s.mean.transpose()).array() / s.stddev.transpose().array();
  }
  return {std::move(out), std::move(s)};
}

Dataset unstandardize(const Dataset& d, const StandardizationStats& stats) {
  Dataset out = d;
  for (Eigen::Index r = 0; r < out.features.rows(); ++r) {
    out.features.row(r) =
        (out.features.row(r).array() * stats.stddev.transpose().array()).matrix() + stats.mean.transpose();
  }
  return out;
}

// ---------------------------------------------------------------- feature selection

Vector correlation_scores(const Matrix& features, const Vector& labels) {
  const auto n = features.rows();
  const double ymean = labels.mean();
  const Vector yc = labels.array() - ymean;
  const double yss = yc.squaredNorm();
  Vector scores = Vector::Zero(features.cols());
  if (n < 2 || yss <= 0.0) return scores;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const Vector xc = features.col(c).array() - features.col(c).mean();
    const double xss = xc.squaredNorm();
    if (xss <= 0.0) continue;
    scores(c) = std::abs(xc.dot(yc)) / std::sqrt(xss * yss);
  }
  return scores;
}

Dataset keep_features(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out = d;
  out.features.resize(d.features.rows(), static_cast<Eigen::Index>(indices.size()));
  out.feature_names.clear();
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= d.n_features()) throw std::out_of_range("feature index out of range");
    out.features.col(static_cast<Eigen::Index>(j)) = d.features.col(static_cast<Eigen::Index>(indices[j]));
    if (indices[j] < d.feature_names.size()) out.feature_names.push_back(d.feature_names[indices[j]]);
  }
  return out;
}

std::pair<Dataset, std::vector<std::size_t>> select_features(const Dataset& d, std::size_t k,
                                                             const FeatureScorer& scorer) {
  if (k < 1 || k > d.n_features()) {
    throw std::out_of_range("feature selection k = " + std::to_string(k) + " outside [1, " +
                            std::to_string(d.n_features()) + "]");
  }
  std::vector<std::size_t> order(d.n_features());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (k < d.n_features()) {
    if (d.labels.kind != ValueKind::continuous || d.labels.values.cols() != 1) {
      throw std::invalid_argument("feature ranking needs a single continuous label column");
    }
    const auto train = d.indices_of(Split::train);
    if (train.empty()) throw std::invalid_argument("feature ranking needs a non-empty training split");
    const Dataset part = d.subset(train);
    const Vector scores = scorer(part.features, part.labels.values.col(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
                     });
    order.resize(k);
    std::sort(order.begin(), order.end());
  }
  return {keep_features(d, order), order};
}

std::pair<Dataset, std::vector<std::size_t>> select_features(const Dataset& d, std::size_t k,
                                                             RankingMethod method) {
  switch (method) {
    case RankingMethod::correlation: return select_features(d, k, FeatureScorer(correlation_scores));
  }
  throw std::invalid_argument("unknown ranking method");
}

// ---------------------------------------------------------------- splits

Dataset split_fixed(const Dataset& d, SplitCounts counts) {
  if (counts.train + counts.validation + counts.test != d.samples()) {
    throw std::invalid_argument("split counts (" + std::to_string(counts.train) + ", " +
                                std::to_string(counts.validation) + ", " + std::to_string(counts.test) +
                                ") do not sum to " + std::to_string(d.samples()) + " samples");
  }
  Dataset out = d;
  for (std::size_t i = 0; i < out.splits.size(); ++i) {
    out.splits[i] = i < counts.train                        ? Split::train
                    : i < counts.train + counts.validation ? Split::validation
                                                            : Split::test;
  }
  return out;
}

// ---------------------------------------------------------------- synthetic

void SyntheticSpec::validate() const {
  if (n_samples < 1) throw std::invalid_argument("synthetic spec needs n_samples >= 1");
  if (n_latent < 1) throw std::invalid_argument("synthetic spec needs n_latent >= 1");
  if (n_latent > n_features) throw std::invalid_argument("synthetic spec needs n_latent <= n_features");
  if (!(feature_noise >= 0.0) || !(label_noise >= 0.0)) {
    throw std::invalid_argument("synthetic noise levels must be >= 0");
  }
  if (explanation_kind == ValueKind::continuous && n_explanations < 1) {
    throw std::invalid_argument("continuous explanation rule needs n_explanations >= 1");
  }
  if (explanation_kind == ValueKind::categorical && n_clusters < 2) {
    throw std::invalid_argument("categorical explanation rule needs n_clusters >= 2");
  }
  if (label_kind == ValueKind::categorical && n_label_classes < 2) {
    throw std::invalid_argument("categorical labels need n_label_classes >= 2");
  }
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("synthetic spec not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw FormatError("malformed synthetic spec " + path.string() + ": " + e.message());
  }
  // Accept either a bare file or one wrapped in a [synthetic] section.
  const auto& t = tree.get_child_optional("synthetic") ? tree.get_child("synthetic") : tree;
  SyntheticSpec s;
  try {
    s.n_samples = t.get("n_samples", s.n_samples);
    s.n_features = t.get("n_features", s.n_features);
    s.n_latent = t.get("n_latent", s.n_latent);
    s.feature_noise = t.get("feature_noise", s.feature_noise);
    s.explanation_kind = parse_value_kind(t.get<std::string>("explanation_kind", "continuous"));
    s.n_explanations = t.get("n_explanations", s.n_explanations);
    s.n_clusters = t.get("n_clusters", s.n_clusters);
    s.label_kind = parse_value_kind(t.get<std::string>("label_kind", "continuous"));
    s.n_label_classes = t.get("n_label_classes", s.n_label_classes);
    s.label_noise = t.get("label_noise", s.label_noise);
    s.seed = t.get("seed", s.seed);
  } catch (const boost::property_tree::ptree_bad_data& e) {
    throw FormatError("malformed synthetic spec " + path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

// Class boundaries at the sample quantiles of `score`, so classes are balanced.
std::vector<int> quantile_classes(const Vector& score, std::size_t n_classes) {
  std::vector<double> sorted(score.data(), score.data() + score.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t q = 1; q < n_classes; ++q) {
    cuts.push_back(sorted[q * sorted.size() / n_classes]);
  }
  std::vector<int> classes;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    classes.push_back(static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), score(i)) - cuts.begin()));
  }
  return classes;
}

}  // namespace

SyntheticData generate_synthetic_detailed(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n_samples);
  const auto latent_dim = static_cast<Eigen::Index>(spec.n_latent);

  SyntheticData out;
  out.latent = gaussian_matrix(n, latent_dim, rng);
  out.feature_map = gaussian_matrix(static_cast<Eigen::Index>(spec.n_features), latent_dim, rng);
  Matrix x = out.latent * out.feature_map.transpose();
  if (spec.feature_noise > 0.0) x += spec.feature_noise * gaussian_matrix(x.rows(), x.cols(), rng);

  Dataset& d = out.data;
  d.features = std::move(x);
  for (std::size_t c = 0; c < spec.n_features; ++c) d.feature_names.push_back("x" + std::to_string(c));
  d.label_name = "y";

  std::normal_distribution<double> normal(0.0, 1.0);
  Vector score(n);
  if (spec.explanation_kind == ValueKind::continuous) {
    const auto ne = static_cast<Eigen::Index>(spec.n_explanations);
    out.explanation_map = gaussian_matrix(ne, latent_dim, rng);
    Matrix e = out.latent * out.explanation_map.transpose();
    out.label_weights = gaussian_matrix(ne, 1, rng).col(0);
    score = e * out.label_weights;
    d.explanations = Target::continuous(std::move(e));
    for (std::size_t c = 0; c < spec.n_explanations; ++c) d.explanation_names.push_back("e" + std::to_string(c));
  } else {
    const auto k = static_cast<Eigen::Index>(spec.n_clusters);
    out.explanation_map = 1.5 * gaussian_matrix(k, latent_dim, rng);
    std::vector<int> clusters(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (out.explanation_map.rowwise() - out.latent.row(i)).rowwise().squaredNorm().minCoeff(&best);
      clusters[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    out.label_weights = 10.0 * gaussian_matrix(k, 1, rng).col(0);
    for (Eigen::Index i = 0; i < n; ++i) score(i) = out.label_weights(clusters[static_cast<std::size_t>(i)]);
    d.explanations = Target::categorical(clusters, static_cast<int>(spec.n_clusters));
    d.explanation_names.push_back("e");
  }

  if (spec.label_kind == ValueKind::continuous) {
    Vector y = score;
    if (spec.label_noise > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) y(i) += spec.label_noise * normal(rng);
    }
    Matrix ym(n, 1);
    ym.col(0) = y;
    d.labels = Target::continuous(std::move(ym));
  } else if (spec.explanation_kind == ValueKind::categorical) {
    // Each explanation group maps to exactly one label class.
    std::vector<int> classes;
    for (int e : d.explanations.classes) classes.push_back(e % static_cast<int>(spec.n_label_classes));
    d.labels = Target::categorical(std::move(classes), static_cast<int>(spec.n_label_classes));
  } else {
    Vector noisy = score;
    if (spec.label_noise > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) noisy(i) += spec.label_noise * normal(rng);
    }
    d.labels = Target::categorical(quantile_classes(noisy, spec.n_label_classes),
                                   static_cast<int>(spec.n_label_classes));
  }
  d.splits.assign(spec.n_samples, Split::train);
  d.validate();
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) { return generate_synthetic_detailed(spec).data; }

}  // namespace ted

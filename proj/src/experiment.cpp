#include "ted/experiment.hpp"

#include "text_util.hpp"

#include "json.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace ted {

namespace pt = boost::property_tree;

// ----------------------------------------------------------------- arms

namespace {

const std::vector<std::pair<Arm, std::string>>& arm_names() {
  static const std::vector<std::pair<Arm, std::string>> names = {
      {Arm::baseline_Y, "baseline_Y"},         {Arm::baseline_E, "baseline_E"},
      {Arm::multitask, "multitask"},           {Arm::embed_Y_knn, "embed_Y_knn"},
      {Arm::embed_E_knn, "embed_E_knn"},       {Arm::pairwise_Y_knn, "pairwise_Y_knn"},
      {Arm::pairwise_E_knn, "pairwise_E_knn"}, {Arm::pairwise_YE_knn, "pairwise_YE_knn"},
  };
  return names;
}

bool needs_explanations(Arm arm) {
  return arm != Arm::baseline_Y && arm != Arm::pairwise_Y_knn && arm != Arm::embed_Y_knn;
}

}  // namespace

std::string to_string(Arm arm) {
  for (const auto& [a, name] : arm_names()) {
    if (a == arm) return name;
  }
  return "?";
}

Arm parse_arm(std::string_view text) {
  const auto t = detail::trim(text);
  for (const auto& [a, name] : arm_names()) {
    if (name == t) return a;
  }
  throw std::invalid_argument("unknown arm '" + std::string(t) + "'");
}

std::vector<Arm> parse_arm_list(std::string_view text) {
  std::vector<Arm> arms;
  for (const auto& item : detail::split_list(text)) arms.push_back(parse_arm(item));
  return arms;
}

// ----------------------------------------------------------------- config

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"id", "seed", "output_dir", "arms", "k", "evaluate_on", "reference_rows"}},
      {"data", {"source", "csv", "schema", "split", "log_transform", "standardize", "select_features"}},
      {"synthetic",
       {"n_samples", "n_features", "n_latent", "feature_noise", "explanation_kind", "n_explanations", "n_clusters",
        "label_kind", "n_label_classes", "label_noise", "seed"}},
      {"network", {"trunk", "activation", "head_hidden", "head_activation"}},
      {"train", {"epochs", "batch_size", "learning_rate", "embedding_learning_rate", "lambdas", "dropout"}},
      {"pairwise",
       {"pairs", "epochs", "batch_size", "learning_rate", "embedding_learning_rate", "neighbor_kind", "c1", "c2",
        "c3", "c4", "m1", "m2", "w", "balanced", "warm_start"}},
      {"knn", {"embed_metric", "pairwise_metric", "bandwidth", "voting"}},
      {"metrics", {"y_thresholds", "e_thresholds"}},
  };
  return keys;
}

class ConfigReader {
 public:
  explicit ConfigReader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return std::string(detail::trim(*v));
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  double number(const std::string& key, double fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    double out = 0;
    if (!detail::parse_double(*v, out)) throw FormatError("config key " + key + ": '" + *v + "' is not a number");
    return out;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const double v = number(key, static_cast<double>(fallback));
    if (v < 0 || std::floor(v) != v) throw FormatError("config key " + key + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const auto out = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
      return out;
    } catch (const std::exception&) {
      throw FormatError("config key " + key + ": '" + *v + "' is not an unsigned integer");
    }
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
    throw FormatError("config key " + key + ": '" + *v + "' is not a boolean");
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : detail::split_list(*v)) {
      double x = 0;
      if (!detail::parse_double(item, x)) throw FormatError("config key " + key + ": '" + item + "' is not a number");
      out.push_back(x);
    }
    return out;
  }

  template <typename Int>
  std::vector<Int> counts(const std::string& key, std::vector<Int> fallback) const {
    if (!raw(key)) return fallback;
    std::vector<Int> out;
    for (double x : numbers(key, {})) {
      if (x < 0 || std::floor(x) != x) throw FormatError("config key " + key + " needs non-negative integers");
      out.push_back(static_cast<Int>(x));
    }
    return out;
  }

  std::optional<Discretizer> thresholds(const std::string& key) const {
    const auto v = raw(key);
    if (!v || *v == "auto") return std::nullopt;
    const auto t = numbers(key, {});
    if (t.size() != 2) throw FormatError("config key " + key + " needs 'auto' or two thresholds");
    return Discretizer(t[0], t[1]);
  }

 private:
  const pt::ptree& tree_;
};

void read_train_block(const ConfigReader& r, const std::string& section, TrainConfig& t) {
  t.epochs = r.count(section + ".epochs", t.epochs);
  t.batch_size = r.count(section + ".batch_size", t.batch_size);
  t.learning_rate = r.number(section + ".learning_rate", t.learning_rate);
  if (r.raw(section + ".embedding_learning_rate")) {
    t.embedding_learning_rate = r.number(section + ".embedding_learning_rate", 0.0);
  }
  if (section == "train") t.dropout = r.number("train.dropout", 0.0);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (arms.empty()) throw std::invalid_argument("no arms requested");
  if (k_values.empty()) throw std::invalid_argument("the k list is empty");
  for (auto k : k_values) {
    if (k < 1) throw std::invalid_argument("k values must be >= 1");
  }
  if (lambdas.empty()) throw std::invalid_argument("the lambda list is empty");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument("lambda values must be >= 0");
  }
  if (network.trunk_widths.empty()) throw std::invalid_argument("the network needs an embedding layer");
  train.validate();
  pairwise.train.validate();
  pairwise.neighbors.validate();
  pairwise.loss.validate();
  if (pairwise.n_pairs < 1) throw std::invalid_argument("pairwise.pairs must be >= 1");
  if (data.source == DataSourceKind::csv && (data.csv.empty() || data.schema.empty())) {
    throw std::invalid_argument("csv data source needs both data.csv and data.schema");
  }
  if (evaluate_on == Split::train) throw std::invalid_argument("evaluate_on must be test or validation");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError("malformed config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [key, value] : overrides) tree.put(pt::ptree::path_type(key, '.'), value);

  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      throw FormatError(body.empty() ? "config key '" + section + "' must sit inside a section"
                                     : "unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw FormatError("unknown config key " + section + "." + key);
    }
  }

  const ConfigReader r(tree);
  ExperimentConfig c;
  c.id = r.text("experiment.id", c.id);
  c.seed = r.seed("experiment.seed", c.seed);
  c.output_dir = resolve(base_dir, r.text("experiment.output_dir", "runs"));
  c.arms = parse_arm_list(r.text("experiment.arms", ""));
  c.k_values = r.counts<std::size_t>("experiment.k", c.k_values);
  const auto eval = r.text("experiment.evaluate_on", "test");
  if (eval == "test") {
    c.evaluate_on = Split::test;
  } else if (eval == "validation") {
    c.evaluate_on = Split::validation;
  } else {
    throw FormatError("experiment.evaluate_on must be test or validation");
  }
  c.reference_rows = r.flag("experiment.reference_rows", false);

  const auto source = r.text("data.source", "synthetic");
  if (source == "synthetic") {
    c.data.source = DataSourceKind::synthetic;
  } else if (source == "csv") {
    c.data.source = DataSourceKind::csv;
  } else {
    throw FormatError("data.source must be synthetic or csv");
  }
  c.data.csv = resolve(base_dir, r.text("data.csv", ""));
  c.data.schema = resolve(base_dir, r.text("data.schema", ""));
  if (r.raw("data.split")) {
    const auto s = r.counts<std::size_t>("data.split", {});
    if (s.size() != 3) throw FormatError("data.split needs three counts: train, validation, test");
    c.data.split = SplitCounts{s[0], s[1], s[2]};
  }
  c.data.log_transform = r.flag("data.log_transform", false);
  c.data.standardize = r.flag("data.standardize", true);
  c.data.select_features = r.count("data.select_features", 0);

  auto& s = c.data.synthetic;
  s.n_samples = r.count("synthetic.n_samples", s.n_samples);
  s.n_features = r.count("synthetic.n_features", s.n_features);
  s.n_latent = r.count("synthetic.n_latent", s.n_latent);
  s.feature_noise = r.number("synthetic.feature_noise", s.feature_noise);
  s.explanation_kind = parse_value_kind(r.text("synthetic.explanation_kind", "continuous"));
  s.n_explanations = r.count("synthetic.n_explanations", s.n_explanations);
  s.n_clusters = r.count("synthetic.n_clusters", s.n_clusters);
  s.label_kind = parse_value_kind(r.text("synthetic.label_kind", "continuous"));
  s.n_label_classes = r.count("synthetic.n_label_classes", s.n_label_classes);
  s.label_noise = r.number("synthetic.label_noise", s.label_noise);
  s.seed = r.seed("synthetic.seed", derive_seed(c.seed, "synthetic"));

  c.network.trunk_widths = r.counts<Eigen::Index>("network.trunk", c.network.trunk_widths);
  c.network.trunk_activation = parse_activation(r.text("network.activation", "identity"));
  c.network.head_hidden = r.counts<Eigen::Index>("network.head_hidden", {});
  c.network.head_activation = parse_activation(r.text("network.head_activation", "rectifier"));

  read_train_block(r, "train", c.train);
  c.lambdas = r.numbers("train.lambdas", c.lambdas);

  auto& p = c.pairwise;
  read_train_block(r, "pairwise", p.train);
  p.n_pairs = r.count("pairwise.pairs", p.n_pairs);
  p.neighbors.kind = parse_value_kind(r.text("pairwise.neighbor_kind", "continuous"));
  p.neighbors.c1 = r.number("pairwise.c1", p.neighbors.c1);
  p.neighbors.c2 = r.number("pairwise.c2", p.neighbors.c2);
  p.neighbors.c3 = r.number("pairwise.c3", p.neighbors.c3);
  p.neighbors.c4 = r.number("pairwise.c4", p.neighbors.c4);
  p.loss.m1 = r.number("pairwise.m1", p.loss.m1);
  p.loss.m2 = r.number("pairwise.m2", p.loss.m2);
  p.loss.w = r.number("pairwise.w", p.loss.w);
  p.balanced = r.flag("pairwise.balanced", false);
  p.warm_start = r.flag("pairwise.warm_start", false);

  c.knn.embed_metric = parse_distance_metric(r.text("knn.embed_metric", "euclidean"));
  c.knn.pairwise_metric = parse_distance_metric(r.text("knn.pairwise_metric", "cosine"));
  const auto bw = r.text("knn.bandwidth", "median");
  if (bw != "median") c.knn.bandwidth.fixed = r.number("knn.bandwidth", 0.0);
  const auto voting = r.text("knn.voting", "kernel");
  if (voting == "kernel") {
    c.knn.voting = Voting::kernel;
  } else if (voting == "majority") {
    c.knn.voting = Voting::majority;
  } else {
    throw FormatError("knn.voting must be kernel or majority");
  }

  c.thresholds.y = r.thresholds("metrics.y_thresholds");
  c.thresholds.e = r.thresholds("metrics.e_thresholds");

  c.source_text = text;
  if (!overrides.empty()) {
    c.source_text += "\n# overrides\n";
    for (const auto& [key, value] : overrides) c.source_text += "# " + key + " = " + value + "\n";
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path().empty() ? "." : path.parent_path(), overrides);
}

// ----------------------------------------------------------------- held-out targets

HeldOutTargets::HeldOutTargets(Target labels, Target explanations)
    : labels_(std::move(labels)), explanations_(std::move(explanations)) {}

const Target& HeldOutTargets::labels(const std::string& stage) {
  ++reads_[stage];
  return labels_;
}

const Target& HeldOutTargets::explanations(const std::string& stage) {
  ++reads_[stage];
  return explanations_;
}

// ----------------------------------------------------------------- data

namespace {

std::vector<double> flatten_values(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  Dataset d = config.data.source == DataSourceKind::csv
                  ? load_csv(config.data.csv, load_schema(config.data.schema))
                  : generate_synthetic(config.data.synthetic);
  SplitCounts counts;
  if (config.data.split) {
    counts = *config.data.split;
  } else {
    counts.test = d.samples() / 5;
    counts.train = d.samples() - counts.test;
  }
  d = split_fixed(d, counts);
  if (config.data.log_transform) d = log_transform(d);

  PreparedData out;
  if (config.data.standardize) {
    auto [standardized, stats] = standardize(d);
    d = std::move(standardized);
    out.standardization = std::move(stats);
  }
  if (config.data.select_features > 0) {
    auto [selected, indices] = select_features(d, config.data.select_features);
    d = std::move(selected);
    out.selected_features = std::move(indices);
  }

  out.train = d.split_part(Split::train);
  if (out.train.samples() == 0) throw std::invalid_argument("the training split is empty");
  Dataset eval = d.split_part(config.evaluate_on);
  if (eval.samples() == 0) {
    throw std::invalid_argument("the " + to_string(config.evaluate_on) + " split is empty");
  }
  out.eval_features = std::move(eval.features);
  out.held_out = HeldOutTargets(std::move(eval.labels), std::move(eval.explanations));

  const Target& ty = out.train.labels;
  if (config.thresholds.y) {
    out.thresholds.y = *config.thresholds.y;
  } else if (ty.kind == ValueKind::continuous) {
    out.thresholds.y = Discretizer::tertiles(flatten_values(ty.values));
  }
  const Target& te = out.train.explanations;
  if (config.thresholds.e) {
    out.thresholds.e = *config.thresholds.e;
  } else if (te.kind == ValueKind::continuous && !te.empty()) {
    out.thresholds.e = Discretizer::tertiles(flatten_values(te.values));
  }
  return out;
}

// ----------------------------------------------------------------- runner

namespace {

Target head_prediction(const Matrix& out, const Head& head) {
  if (head.kind == HeadKind::regression) return Target::continuous(out);
  std::vector<int> classes;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::Index best = 0;
    out.row(r).maxCoeff(&best);
    classes.push_back(static_cast<int>(best));
  }
  return Target::categorical(std::move(classes), static_cast<int>(out.cols()));
}

void write_matrix_csv(const Matrix& m, const std::string& prefix, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << prefix << c;
  out << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << detail::format_double(m(r, c));
    out << "\n";
  }
}

void append_target_columns(const Target& t, const std::string& prefix, std::vector<std::string>& header,
                           std::vector<std::vector<std::string>>& rows) {
  if (t.rows() == 0) return;
  if (t.kind == ValueKind::categorical) {
    header.push_back(prefix);
    for (std::size_t r = 0; r < t.classes.size(); ++r) rows[r].push_back(std::to_string(t.classes[r]));
    return;
  }
  for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
    header.push_back(t.values.cols() == 1 ? prefix : prefix + std::to_string(c));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
      rows[static_cast<std::size_t>(r)].push_back(detail::format_double(t.values(r, c)));
    }
  }
}

void write_predictions(const std::filesystem::path& path, std::size_t n, const Target* labels,
                       const Target* explanations) {
  std::vector<std::string> header{"row"};
  std::vector<std::vector<std::string>> rows(n);
  for (std::size_t r = 0; r < n; ++r) rows[r].push_back(std::to_string(r));
  if (labels) append_target_columns(*labels, "y_pred", header, rows);
  if (explanations) append_target_columns(*explanations, "e_pred", header, rows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_history(const std::vector<double>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << "," << detail::format_double(history[i]) << "\n";
}

std::string lambda_tag(double lambda) { return detail::format_double(lambda); }

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

}  // namespace

ExperimentRunner::ExperimentRunner(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  data_ = prepare_data(config_);
}

std::uint64_t ExperimentRunner::arm_seed(std::string_view label) const { return derive_seed(config_.seed, label); }

const Network& ExperimentRunner::supervised_network(const std::string& which) {
  if (auto it = networks_.find(which); it != networks_.end()) return it->second;
  const Target& target = which == "Y" ? data_.train.labels : data_.train.explanations;
  if (target.empty()) throw std::invalid_argument("the dataset has no " + which + " values to train on");
  NetworkShape shape;
  shape.input_width = static_cast<Eigen::Index>(data_.train.n_features());
  shape.trunk_widths = config_.network.trunk_widths;
  shape.trunk_activation = config_.network.trunk_activation;
  HeadShape head = head_for(target);
  head.hidden = config_.network.head_hidden;
  head.hidden_activation = config_.network.head_activation;
  shape.heads.push_back(head);
  TrainConfig tc = config_.train;
  tc.seed = arm_seed("net:" + which + ":sgd");
  TrainResult trained = train(make_network(shape, arm_seed("net:" + which + ":init")), data_.train.features,
                              SupervisedLoss{{&target}, {1.0}}, tc);
  return networks_.emplace(which, std::move(trained.net)).first->second;
}

ArmResult ExperimentRunner::score(Arm arm, const std::string& parameter_name, std::optional<double> parameter,
                                  const Target* labels, const Target* explanations) {
  ArmResult row;
  row.arm = to_string(arm);
  row.parameter_name = parameter_name;
  row.parameter = parameter;
  row.test_size = data_.held_out.size();
  if (labels) score_labels(row, *labels, data_.held_out.labels("metrics"), data_.thresholds.y);
  if (explanations && data_.train.has_explanations()) {
    score_explanations(row, *explanations, data_.held_out.explanations("metrics"), data_.thresholds.e);
  }
  return row;
}

std::vector<ArmResult> ExperimentRunner::knn_rows(Arm arm, const Network& net, DistanceMetric metric,
                                                  const std::filesystem::path& artifact_dir) {
  const NeighborIndex index = build_index(embed(net, data_.train.features), data_.train.labels,
                                          data_.train.explanations, metric, config_.knn.bandwidth);
  const Matrix queries = embed(net, data_.eval_features);
  if (!artifact_dir.empty()) {
    index.save(artifact_dir / "index.txt");
    write_matrix_csv(queries, "f", artifact_dir / "embeddings_eval.csv");
  }
  std::vector<ArmResult> rows;
  for (auto k : config_.k_values) {
    const KnnPrediction pred = predict_batch(index, queries, k, config_.knn.voting);
    if (!artifact_dir.empty()) {
      write_predictions(artifact_dir / ("predictions_k" + std::to_string(k) + ".csv"),
                        static_cast<std::size_t>(queries.rows()), &pred.labels, &pred.explanations);
    }
    rows.push_back(score(arm, "k", static_cast<double>(k), &pred.labels, &pred.explanations));
  }
  return rows;
}

std::vector<ArmResult> ExperimentRunner::run_arm(Arm arm, const std::filesystem::path& artifact_dir) {
  try {
    if (needs_explanations(arm) && !data_.train.has_explanations()) {
      throw std::invalid_argument("this arm needs explanations and the dataset has none");
    }
    const auto n_eval = static_cast<std::size_t>(data_.eval_features.rows());
    switch (arm) {
      case Arm::baseline_Y:
      case Arm::baseline_E: {
        const bool is_y = arm == Arm::baseline_Y;
        const Network& net = supervised_network(is_y ? "Y" : "E");
        const Target pred = head_prediction(forward(net, data_.eval_features).heads[0], net.heads()[0]);
        if (!artifact_dir.empty()) {
          save_checkpoint(net, artifact_dir / "model.ckpt");
          write_predictions(artifact_dir / "predictions.csv", n_eval, is_y ? &pred : nullptr,
                            is_y ? nullptr : &pred);
        }
        return {score(arm, "", std::nullopt, is_y ? &pred : nullptr, is_y ? nullptr : &pred)};
      }
      case Arm::multitask: {
        std::vector<ArmResult> rows;
        NetworkShape shape;
        shape.input_width = static_cast<Eigen::Index>(data_.train.n_features());
        shape.trunk_widths = config_.network.trunk_widths;
        shape.trunk_activation = config_.network.trunk_activation;
        for (const Target* t : {&data_.train.labels, &data_.train.explanations}) {
          HeadShape h = head_for(*t);
          h.hidden = config_.network.head_hidden;
          h.hidden_activation = config_.network.head_activation;
          shape.heads.push_back(h);
        }
        for (double lambda : config_.lambdas) {
          const std::string tag = "multitask:" + lambda_tag(lambda);
          TrainConfig tc = config_.train;
          tc.multitask_weight = lambda;
          tc.seed = arm_seed(tag + ":sgd");
          const SupervisedLoss loss{{&data_.train.labels, &data_.train.explanations}, {1.0, lambda}};
          const Network net =
              train(make_network(shape, arm_seed(tag + ":init")), data_.train.features, loss, tc).net;
          const ForwardResult out = forward(net, data_.eval_features);
          const Target py = head_prediction(out.heads[0], net.heads()[0]);
          const Target pe = head_prediction(out.heads[1], net.heads()[1]);
          if (!artifact_dir.empty()) {
            save_checkpoint(net, artifact_dir / ("model_lambda" + lambda_tag(lambda) + ".ckpt"));
            write_predictions(artifact_dir / ("predictions_lambda" + lambda_tag(lambda) + ".csv"), n_eval, &py, &pe);
          }
          rows.push_back(score(arm, "lambda", lambda, &py, &pe));
        }
        return rows;
      }
      case Arm::embed_Y_knn:
      case Arm::embed_E_knn: {
        const Network& net = supervised_network(arm == Arm::embed_Y_knn ? "Y" : "E");
        if (!artifact_dir.empty()) save_checkpoint(net, artifact_dir / "model.ckpt");
        return knn_rows(arm, net, config_.knn.embed_metric, artifact_dir);
      }
      case Arm::pairwise_Y_knn:
      case Arm::pairwise_E_knn:
      case Arm::pairwise_YE_knn: {
        const PairMode mode = arm == Arm::pairwise_Y_knn   ? PairMode::y_only
                              : arm == Arm::pairwise_E_knn ? PairMode::e_only
                                                           : PairMode::y_and_e;
        const auto name = to_string(arm);
        const PairBatch pairs = sample_pairs(data_.train, config_.pairwise.neighbors, config_.pairwise.n_pairs,
                                             arm_seed(name + ":pairs"), {mode, config_.pairwise.balanced});
        Network init;
        if (config_.pairwise.warm_start) {
          init = supervised_network("Y");
        } else {
          NetworkShape shape;
          shape.input_width = static_cast<Eigen::Index>(data_.train.n_features());
          shape.trunk_widths = config_.network.trunk_widths;
          shape.trunk_activation = config_.network.trunk_activation;
          shape.heads.push_back(head_for(data_.train.labels));
          init = make_network(shape, arm_seed(name + ":init"));
        }
        TrainConfig tc = config_.pairwise.train;
        tc.seed = arm_seed(name + ":sgd");
        const PairwiseTrainResult trained =
            train_pairwise(std::move(init), data_.train.features, pairs, config_.pairwise.loss, tc, mode);
        if (!artifact_dir.empty()) {
          write_pairs(pairs, artifact_dir / "pairs.txt");
          save_checkpoint(trained.train.net, artifact_dir / "model.ckpt");
          write_history(trained.train.loss_history, artifact_dir / "loss_history.csv");
        }
        return knn_rows(arm, trained.train.net, config_.knn.pairwise_metric, artifact_dir);
      }
    }
    throw std::logic_error("unhandled arm");
  } catch (const std::exception& e) {
    throw std::runtime_error(to_string(arm) + ": " + e.what());
  }
}

ExperimentOutcome ExperimentRunner::run(bool write_artifacts) {
  ExperimentOutcome outcome;
  const std::string started = utc_now();
  if (write_artifacts) {
    outcome.run_dir = config_.output_dir / config_.id;
    std::filesystem::create_directories(outcome.run_dir);
  }
  std::vector<ArmResult> rows;
  nlohmann::ordered_json arms = nlohmann::ordered_json::array();
  for (Arm arm : config_.arms) {
    const auto name = to_string(arm);
    std::filesystem::path dir;
    if (write_artifacts) {
      dir = outcome.run_dir / "arms" / name;
      std::filesystem::create_directories(dir);
    }
    nlohmann::ordered_json entry;
    entry["arm"] = name;
    try {
      auto arm_rows = run_arm(arm, dir);
      rows.insert(rows.end(), arm_rows.begin(), arm_rows.end());
      entry["status"] = "ok";
      entry["rows"] = arm_rows.size();
    } catch (const std::exception& e) {
      outcome.failures.push_back({name, e.what()});
      entry["status"] = "failed";
      entry["error"] = e.what();
    }
    arms.push_back(std::move(entry));
  }
  if (config_.reference_rows) {
    for (auto& r : olfactory_reference_rows()) rows.push_back(std::move(r));
  }
  if (!rows.empty()) outcome.report = compile_report(std::move(rows));
  outcome.label_audit = data_.held_out.audit();

  if (write_artifacts) {
    if (outcome.report) {
      std::ofstream(outcome.run_dir / "report.json") << report_to_json(*outcome.report);
      std::ofstream(outcome.run_dir / "report.txt") << render_table(*outcome.report);
    }
    nlohmann::ordered_json m;
    m["experiment_id"] = config_.id;
    m["config_hash"] = hex64(fnv1a(config_.source_text));
    m["master_seed"] = config_.seed;
    m["evaluate_on"] = to_string(config_.evaluate_on);
    nlohmann::ordered_json seeds;
    for (Arm arm : config_.arms) {
      const auto name = to_string(arm);
      nlohmann::ordered_json s;
      if (arm == Arm::baseline_Y || arm == Arm::embed_Y_knn || arm == Arm::baseline_E || arm == Arm::embed_E_knn) {
        const std::string net = arm == Arm::baseline_Y || arm == Arm::embed_Y_knn ? "net:Y" : "net:E";
        s = {{"network", net}, {"init", arm_seed(net + ":init")}, {"sgd", arm_seed(net + ":sgd")}};
      } else if (arm == Arm::multitask) {
        for (double lambda : config_.lambdas) {
          const std::string tag = "multitask:" + lambda_tag(lambda);
          s[lambda_tag(lambda)] = {{"init", arm_seed(tag + ":init")}, {"sgd", arm_seed(tag + ":sgd")}};
        }
      } else {
        s = {{"pairs", arm_seed(name + ":pairs")}, {"sgd", arm_seed(name + ":sgd")}};
        if (config_.pairwise.warm_start) {
          s["warm_start"] = "net:Y";
          s["init"] = arm_seed("net:Y:init");
        } else {
          s["init"] = arm_seed(name + ":init");
        }
      }
      seeds[name] = s;
    }
    if (config_.data.source == DataSourceKind::synthetic) seeds["synthetic"] = config_.data.synthetic.seed;
    m["seeds"] = seeds;
    m["arms"] = arms;
    nlohmann::ordered_json audit;
    for (const auto& [stage, reads] : outcome.label_audit) audit[stage] = reads;
    m["held_out_label_reads"] = audit.is_null() ? nlohmann::ordered_json::object() : audit;
    if (!data_.selected_features.empty()) m["selected_features"] = data_.selected_features;
    m["started_at"] = started;
    m["finished_at"] = utc_now();
    std::ofstream(outcome.run_dir / "manifest.json") << m.dump(2) << "\n";
    std::ofstream(outcome.run_dir / "config.cfg") << config_.source_text;
  }
  return outcome;
}

std::vector<ArmResult> run_arm(const ExperimentConfig& config, Arm arm) {
  ExperimentRunner runner(config);
  return runner.run_arm(arm);
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  ExperimentRunner runner(config);
  return runner.run(true);
}

std::vector<ArmResult> olfactory_reference_rows() {
  auto row = [](const std::string& arm, double acc, double mae_d, double mae_c) {
    ArmResult r;
    r.arm = arm;
    r.test_size = 69;
    r.cited = true;
    r.at(Column::y_accuracy) = acc;
    r.at(Column::y_mae_discretized) = mae_d;
    r.at(Column::y_mae_continuous) = mae_c;
    return r;
  };
  return {row("reference_lasso_Y", 0.4928, 0.5072, 8.6483), row("reference_rf_Y", 0.5217, 0.4783, 8.9447)};
}

// ----------------------------------------------------------------- sweep

std::vector<SweepPoint> run_sweep(const std::string& config_text, const std::filesystem::path& base_dir,
                                  const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
                                  const ConfigOverrides& fixed) {
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw std::invalid_argument("grid key " + key + " has no values");
  }
  std::vector<SweepPoint> points;
  std::vector<std::size_t> pos(grid.size(), 0);
  while (true) {
    SweepPoint point;
    for (std::size_t i = 0; i < grid.size(); ++i) point.assignment.emplace_back(grid[i].first, grid[i].second[pos[i]]);
    ConfigOverrides overrides = fixed;
    overrides.insert(overrides.end(), point.assignment.begin(), point.assignment.end());
    overrides.emplace_back("experiment.evaluate_on", "validation");
    ExperimentRunner runner(parse_config(config_text, base_dir, overrides));
    ExperimentOutcome out = runner.run(false);
    point.report = std::move(out.report);
    point.failures = std::move(out.failures);
    points.push_back(std::move(point));

    std::size_t i = grid.size();
    while (i > 0) {
      --i;
      if (++pos[i] < grid[i].second.size()) break;
      pos[i] = 0;
      if (i == 0) return points;
    }
    if (grid.empty()) return points;
  }
}

std::string sweep_to_json(const std::vector<SweepPoint>& points) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    nlohmann::ordered_json entry;
    nlohmann::ordered_json assignment;
    for (const auto& [k, v] : p.assignment) assignment[k] = v;
    entry["assignment"] = assignment.is_null() ? nlohmann::ordered_json::object() : assignment;
    entry["report"] = p.report ? nlohmann::ordered_json::parse(report_to_json(*p.report)) : nlohmann::ordered_json();
    auto failures = nlohmann::ordered_json::array();
    for (const auto& f : p.failures) failures.push_back({{"arm", f.arm}, {"error", f.message}});
    entry["failures"] = failures;
    j.push_back(std::move(entry));
  }
  return j.dump(2) + "\n";
}

}  // namespace ted

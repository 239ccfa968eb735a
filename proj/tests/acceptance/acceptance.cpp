// Acceptance suite: one PASS / FAIL / SKIP line per criterion.

#include "ted/experiment.hpp"
#include "ted/knn.hpp"
#include "ted/metrics.hpp"
#include "ted/oracle.hpp"
#include "ted/pairloss.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace ted;

namespace {

struct Verdict {
  enum { pass, fail, skip } state = pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("ted_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  return dir;
}

const fs::path source_dir = TED_SOURCE_DIR;

Verdict gradients() {
  const auto t0 = Clock::now();
  const auto cases = oracle::run_gradcheck_suite(20, 1);
  const double secs = seconds_since(t0);
  std::map<std::string, std::pair<std::size_t, double>> per_loss;
  bool ok = true;
  for (const auto& c : cases) {
    auto& [n, worst] = per_loss[c.loss];
    ++n;
    worst = std::max(worst, c.max_rel_error);
    ok = ok && c.passed;
  }
  std::ostringstream d;
  for (const auto& [loss, s] : per_loss) {
    d << loss << "=" << s.second << " ";
    ok = ok && s.first >= 20;
  }
  d << "(" << cases.size() << " instances, " << secs << " s)";
  return {ok && per_loss.size() == 6 && secs < 30.0 ? Verdict::pass : Verdict::fail, d.str()};
}

Verdict pair_loss_values() {
  const std::vector<double> f{0.7, -1.3, 2.2, 0.01};
  const double neighbor = loss_xy(f, f, PairRelation::neighbor, 0.25);
  const double non_neighbor = loss_xy(f, f, PairRelation::non_neighbor, 0.25);
  bool ok = neighbor == 0.0 && std::abs(non_neighbor - 0.75) <= 1e-12;

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> rel(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t identical = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = normal(rng);
    for (auto& x : b) x = normal(rng);
    const LossParams p{unit(rng), unit(rng), 0.0};
    const auto ry = static_cast<PairRelation>(rel(rng));
    const auto re = static_cast<PairRelation>(rel(rng));
    if (loss_combined(a, b, ry, re, p) == loss_xy(a, b, ry, p.m1)) ++identical;
  }
  ok = ok && identical == 1000;
  std::ostringstream d;
  d << "neighbor=" << neighbor << " non_neighbor=" << non_neighbor << " w0_identical=" << identical << "/1000";
  return {ok ? Verdict::pass : Verdict::fail, d.str()};
}

Verdict knn_exactness() {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> size(1, 500);
  std::uniform_int_distribution<int> dim(1, 64);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t matched = 0, weight_ok = 0;
  const std::size_t cases = 200;
  for (std::size_t c = 0; c < cases; ++c) {
    const int n = size(rng);
    const int d = dim(rng);
    Matrix pts(n, d);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    if (c % 3 == 0) {
      for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = std::round(pts.data()[i]);
      if (n > 1) pts.row(n - 1) = pts.row(0);
    }
    Matrix q(1, d);
    for (Eigen::Index i = 0; i < d; ++i) q(0, i) = c % 3 == 0 ? std::round(normal(rng)) : normal(rng);
    const auto metric = c % 2 ? DistanceMetric::cosine : DistanceMetric::euclidean;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n), 1 + c % 25);
    Matrix labels = Matrix::Zero(n, 1);
    const NeighborIndex index = build_index(pts, Target::continuous(labels), {}, metric);
    const Neighborhood got = index.query(row_span(q, 0), k);
    const auto want = oracle::knn_exhaustive(pts, row_span(q, 0), k, metric);

    bool same = got.indices == want.indices;
    for (std::size_t i = 0; same && i < k; ++i) same = std::abs(got.distances[i] - want.distances[i]) <= 1e-12;
    matched += same;

    double sum = 0.0;
    bool monotone = true;
    for (std::size_t i = 0; i < k; ++i) {
      sum += got.weights[i];
      if (i > 0 && got.distances[i] >= got.distances[i - 1] && got.weights[i] > got.weights[i - 1]) monotone = false;
    }
    weight_ok += monotone && std::abs(sum - 1.0) <= 1e-12;
  }
  std::ostringstream d;
  d << "oracle matches " << matched << "/" << cases << ", weight checks " << weight_ok << "/" << cases;
  return {matched == cases && weight_ok == cases ? Verdict::pass : Verdict::fail, d.str()};
}

Verdict metric_fidelity() {
  const std::vector<double> yv{-5.0, 0.0, 33.65, 33.66, 33.67, 40.0, 49.67, 49.68, 49.69, 60.0, 100.0, 33.66};
  const std::vector<int> yb{-1, -1, -1, 0, 0, 0, 0, 1, 1, 1, 1, 0};
  const std::vector<double> ev{0.0, 1.0, 2.71, 2.72, 2.73, 4.0, 6.56, 6.57, 6.58, 10.0, -3.0, 6.57};
  const std::vector<int> eb{-1, -1, -1, 0, 0, 0, 0, 1, 1, 1, -1, 1};
  const bool y_ok = discretize_classes(yv, Discretizer(33.66, 49.68)) == yb;
  const bool e_ok = discretize_classes(ev, Discretizer(2.72, 6.57)) == eb;
  Matrix p(1, 1), t(1, 1);
  p << 1.0;
  t << -1.0;
  const double two = mae(p, t);
  std::ostringstream d;
  d << "Y fixture " << (y_ok ? "ok" : "wrong") << ", E fixture " << (e_ok ? "ok" : "wrong") << ", |1-(-1)|=" << two;
  return {y_ok && e_ok && two == 2.0 ? Verdict::pass : Verdict::fail, d.str()};
}

std::optional<double> accuracy_at(const MetricsReport& r, const std::string& arm, double k) {
  for (const auto& row : r.rows) {
    if (row.result.arm == arm && row.result.parameter == k) return row.result.at(Column::y_accuracy);
  }
  return std::nullopt;
}

Verdict synthetic_claim(const fs::path& scratch) {
  const auto t0 = Clock::now();
  double pairwise = 0.0, baseline = 0.0;
  std::ostringstream d;
  for (int seed = 1; seed <= 5; ++seed) {
    const ExperimentConfig cfg = load_config(source_dir / "configs/synthetic.cfg",
                                             {{"experiment.seed", std::to_string(seed)},
                                              {"experiment.arms", "embed_Y_knn, pairwise_YE_knn"},
                                              {"experiment.k", "5"},
                                              {"data.split", "400, 0, 100"},
                                              {"experiment.output_dir", (scratch / "c5").string()}});
    const auto outcome = ExperimentRunner(cfg).run(false);
    if (!outcome.failures.empty()) return {Verdict::fail, "arm failed: " + outcome.failures[0].message};
    if (!outcome.report) return {Verdict::fail, "run produced no report"};
    const auto p = accuracy_at(*outcome.report, "pairwise_YE_knn", 5);
    const auto b = accuracy_at(*outcome.report, "embed_Y_knn", 5);
    if (!p || !b) return {Verdict::fail, "missing k=5 rows"};
    pairwise += *p / 5.0;
    baseline += *b / 5.0;
    d << "s" << seed << ":" << *p << "/" << *b << " ";
  }
  const double secs = seconds_since(t0);
  d << "mean pairwise=" << pairwise << " embedding baseline=" << baseline << " (" << secs << " s)";
  return {pairwise - baseline >= 0.0 && secs < 300.0 ? Verdict::pass : Verdict::fail, d.str()};
}

Verdict determinism(const fs::path& scratch, fs::path& report_out) {
  std::string first;
  for (int rep = 0; rep < 2; ++rep) {
    const ExperimentConfig cfg = load_config(source_dir / "configs/synthetic.cfg",
                                             {{"experiment.output_dir", (scratch / ("c6_" + std::to_string(rep))).string()}});
    const auto outcome = run_experiment(cfg);
    if (!outcome.failures.empty()) return {Verdict::fail, "arm failed: " + outcome.failures[0].message};
    const std::string text = read_file(outcome.run_dir / "report.json");
    if (rep == 0) {
      first = text;
      report_out = outcome.run_dir / "report.json";
    } else if (text != first) {
      return {Verdict::fail, "report.json differs between runs"};
    }
  }
  return {Verdict::pass, "report.json byte-identical across two runs (" + std::to_string(first.size()) + " bytes)"};
}

Verdict olfactory() {
  const char* env = std::getenv("TED_OLFACTORY_CONFIG");
  const fs::path cfg_path = env ? fs::path(env) : source_dir / "configs/olfactory.cfg";
  ExperimentConfig cfg;
  try {
    cfg = load_config(cfg_path, {{"experiment.arms", "pairwise_YE_knn"}, {"experiment.k", "1"}});
  } catch (const std::exception& e) {
    return {Verdict::skip, e.what()};
  }
  if (cfg.data.source == DataSourceKind::csv && !fs::exists(cfg.data.csv)) {
    return {Verdict::skip, "olfactory data not present at " + cfg.data.csv.lexically_normal().string()};
  }
  const auto outcome = ExperimentRunner(cfg).run(false);
  if (!outcome.failures.empty()) return {Verdict::fail, "arm failed: " + outcome.failures[0].message};
  if (!outcome.report) return {Verdict::fail, "run produced no report"};
  const auto acc = accuracy_at(*outcome.report, "pairwise_YE_knn", 1);
  if (!acc) return {Verdict::fail, "no k=1 row"};
  std::ostringstream d;
  d << "k=1 Y accuracy " << *acc << " (target 0.6522 +- 0.10)";
  return {std::abs(*acc - 0.6522) <= 0.10 ? Verdict::pass : Verdict::fail, d.str()};
}

Verdict table_shape(const fs::path& report_path) {
  if (report_path.empty()) return {Verdict::fail, "no synthetic report available"};
  const MetricsReport r = report_from_json(read_file(report_path));
  const std::set<double> want{1, 2, 5, 10, 15, 20};
  const std::vector<Column> five{Column::y_accuracy, Column::y_mae_discretized, Column::y_mae_continuous,
                                 Column::e_mae_discretized, Column::e_mae_continuous};
  std::size_t arms_ok = 0;
  std::ostringstream d;
  for (const std::string arm : {"embed_Y_knn", "embed_E_knn", "pairwise_Y_knn", "pairwise_E_knn", "pairwise_YE_knn"}) {
    std::multiset<double> ks;
    bool filled = true;
    for (const auto& row : r.rows) {
      if (row.result.arm != arm) continue;
      ks.insert(row.result.parameter.value_or(-1));
      for (Column c : five) filled = filled && row.result.at(c).has_value();
    }
    const bool ok = filled && ks == std::multiset<double>(want.begin(), want.end());
    arms_ok += ok;
    if (!ok) d << arm << " malformed; ";
  }
  d << arms_ok << "/5 kNN arms carry k in {1,2,5,10,15,20} with five populated columns";
  return {arms_ok == 5 ? Verdict::pass : Verdict::fail, d.str()};
}

}  // namespace

int main() {
  const fs::path scratch = scratch_dir();
  fs::path synthetic_report;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, gradients},
      {2, pair_loss_values},
      {3, knn_exactness},
      {4, metric_fidelity},
      {5, [&] { return synthetic_claim(scratch); }},
      {6, [&] { return determinism(scratch, synthetic_report); }},
      {7, olfactory},
      {8, [&] { return table_shape(synthetic_report); }},
  };
  int failures = 0;
  for (const auto& [n, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.state == Verdict::pass ? "PASS" : v.state == Verdict::fail ? "FAIL" : "SKIP";
    failures += v.state == Verdict::fail;
    std::cout << "criterion " << n << ": " << tag << "  " << v.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(scratch, ec);
  return failures == 0 ? 0 : 1;
}

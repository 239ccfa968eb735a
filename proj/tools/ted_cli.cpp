#include "ted/dataset.hpp"
#include "ted/experiment.hpp"
#include "ted/metrics.hpp"
#include "ted/oracle.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected section.key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cmd_run(const std::string& config, const std::string& out, const std::string& seed, const std::string& arms,
            const std::vector<std::string>& sets) {
  ted::ConfigOverrides overrides;
  for (const auto& s : sets) overrides.push_back(split_assignment(s));
  if (!out.empty()) overrides.emplace_back("experiment.output_dir", fs::absolute(out).string());
  if (!seed.empty()) overrides.emplace_back("experiment.seed", seed);
  if (!arms.empty()) overrides.emplace_back("experiment.arms", arms);
  const auto cfg = ted::load_config(config, overrides);
  const auto outcome = ted::run_experiment(cfg);
  if (outcome.report) std::cout << ted::render_table(*outcome.report);
  std::cout << "run directory: " << outcome.run_dir.string() << "\n";
  for (const auto& f : outcome.failures) std::cerr << "ted: arm failed: " << f.message << "\n";
  return outcome.failures.empty() ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, const std::string& out_path) {
  const auto spec = ted::load_synthetic_spec(spec_path);
  const auto d = ted::generate_synthetic(spec);
  ted::write_csv(d, out_path);
  ted::CsvSchema schema;
  schema.label_column = d.label_name;
  schema.label_kind = d.labels.kind;
  schema.explanation_columns = d.explanation_names;
  schema.explanation_kind = d.explanations.kind;
  schema.feature_columns = d.feature_names;
  const auto schema_path = fs::path(out_path).replace_extension(".schema");
  ted::write_schema(schema, schema_path);
  std::cout << "wrote " << d.samples() << " samples to " << out_path << " and " << schema_path.string() << "\n";
  return 0;
}

int cmd_gradcheck(std::size_t instances, std::uint64_t seed) {
  const auto cases = ted::oracle::run_gradcheck_suite(instances, seed);
  std::map<std::string, std::pair<std::size_t, double>> summary;  // failures, worst error
  std::vector<std::string> order;
  for (const auto& c : cases) {
    if (!summary.count(c.loss)) order.push_back(c.loss);
    auto& s = summary[c.loss];
    s.first += c.passed ? 0 : 1;
    s.second = std::max(s.second, c.max_rel_error);
    if (!c.passed) {
      std::cerr << "ted: gradcheck failed: " << c.loss << " seed " << c.seed << " max relative error "
                << c.max_rel_error << "\n";
    }
  }
  std::size_t failures = 0;
  for (const auto& loss : order) {
    const auto& [failed, worst] = summary[loss];
    failures += failed;
    std::cout << (failed ? "FAIL " : "ok   ") << loss << "  instances=" << instances << "  max_rel_error=" << worst
              << "\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& dir) {
  const auto report = ted::report_from_json(read_file(fs::path(dir) / "report.json"));
  std::cout << ted::render_table(report);
  return 0;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& grid_args, const std::vector<std::string>& sets,
              const std::string& out) {
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  for (const auto& g : grid_args) {
    auto [key, values] = split_assignment(g);
    std::vector<std::string> list;
    std::stringstream s(values);
    for (std::string v; std::getline(s, v, ',');) list.push_back(v);
    grid.emplace_back(key, list);
  }
  ted::ConfigOverrides fixed;
  for (const auto& s : sets) fixed.push_back(split_assignment(s));
  const fs::path path(config);
  const auto points = ted::run_sweep(read_file(path), path.parent_path().empty() ? "." : path.parent_path(), grid, fixed);
  const auto json = ted::sweep_to_json(points);
  if (out.empty()) {
    std::cout << json;
  } else {
    std::ofstream(out) << json;
    std::cout << "wrote " << points.size() << " sweep points to " << out << "\n";
  }
  std::size_t failures = 0;
  for (const auto& p : points) {
    for (const auto& f : p.failures) {
      std::cerr << "ted: arm failed: " << f.message << "\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-aware embeddings: training, kNN evaluation and reporting"};
  app.require_subcommand(1);

  std::string config, out, seed, arms;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config,--config", config, "config file");
  run->add_option("--out", out, "output directory (replaces experiment.output_dir)");
  run->add_option("--seed", seed, "master seed (replaces experiment.seed)");
  run->add_option("--arms", arms, "comma-separated arm list (replaces experiment.arms)");
  run->add_option("--set", sets, "section.key=value override, repeatable");

  std::string spec, csv_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as CSV plus schema");
  synth->add_option("spec", spec, "synthetic spec file")->required();
  synth->add_option("out", csv_out, "output CSV path")->required();

  std::size_t instances = 20;
  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gradcheck->add_option("--instances", instances, "seeded instances per loss");
  gradcheck->add_option("--seed", gc_seed, "suite seed");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "re-render the table of a finished run");
  report->add_option("dir", report_dir, "run directory holding report.json")->required();

  std::vector<std::string> grid;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "grid search scored on the validation split");
  sweep->add_option("--config", config, "config file")->required();
  sweep->add_option("--grid", grid, "section.key=v1,v2,... repeatable")->required();
  sweep->add_option("--set", sets, "section.key=value override, repeatable");
  sweep->add_option("--out", sweep_out, "write the sweep results here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (config.empty()) throw std::invalid_argument("run needs a config file");
      return cmd_run(config, out, seed, arms, sets);
    }
    if (*synth) return cmd_synth(spec, csv_out);
    if (*gradcheck) return cmd_gradcheck(instances, gc_seed);
    if (*report) return cmd_report(report_dir);
    if (*sweep) return cmd_sweep(config, grid, sets, sweep_out);
  } catch (const std::exception& e) {
    std::cerr << "ted: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

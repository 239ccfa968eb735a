#pragma once

#include "ted/dataset.hpp"
#include "ted/knn.hpp"
#include "ted/metrics.hpp"
#include "ted/network.hpp"
#include "ted/pairloss.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ted {

enum class Arm {
  baseline_Y,
  baseline_E,
  multitask,
  embed_Y_knn,
  embed_E_knn,
  pairwise_Y_knn,
  pairwise_E_knn,
  pairwise_YE_knn,
};

std::string to_string(Arm arm);
Arm parse_arm(std::string_view text);
std::vector<Arm> parse_arm_list(std::string_view text);

enum class DataSourceKind { synthetic, csv };

struct DataConfig {
  DataSourceKind source = DataSourceKind::synthetic;
  std::filesystem::path csv;
  std::filesystem::path schema;
  SyntheticSpec synthetic;
  std::optional<SplitCounts> split;  // unset: everything but the last 20% trains
  bool log_transform = false;
  bool standardize = true;
  std::size_t select_features = 0;   // 0 keeps every feature
};

struct NetworkConfig {
  std::vector<Eigen::Index> trunk_widths{64};
  Activation trunk_activation = Activation::identity;
  std::vector<Eigen::Index> head_hidden;
  Activation head_activation = Activation::rectifier;
};

struct PairwiseConfig {
  TrainConfig train;
  NeighborSpec neighbors;
  LossParams loss;
  std::size_t n_pairs = 100000;
  bool balanced = false;
  bool warm_start = false;  // start the trunk from the baseline Y network
};

struct KnnConfig {
  DistanceMetric embed_metric = DistanceMetric::euclidean;
  DistanceMetric pairwise_metric = DistanceMetric::cosine;
  BandwidthPolicy bandwidth;
  Voting voting = Voting::kernel;
};

struct ThresholdConfig {
  std::optional<Discretizer> y;  // unset: tertiles of the training labels
  std::optional<Discretizer> e;  // unset: tertiles of the pooled training explanations
};

struct ExperimentConfig {
  std::string id = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  std::vector<Arm> arms;
  std::vector<std::size_t> k_values{1, 2, 5, 10, 15, 20};
  Split evaluate_on = Split::test;
  bool reference_rows = false;

  DataConfig data;
  NetworkConfig network;
  TrainConfig train;
  std::vector<double> lambdas{1.0};
  PairwiseConfig pairwise;
  KnnConfig knn;
  ThresholdConfig thresholds;

  std::string source_text;  // canonical text the config was parsed from

  void validate() const;
};

/// `section.key` -> value replacements applied before parsing.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses the sectioned key-value format; relative paths resolve against
/// `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".",
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Evaluation-split labels and explanations behind an access counter. Every
/// read is tallied under the calling stage so the manifest can show that only
/// the metrics stage looked.
class HeldOutTargets {
 public:
  HeldOutTargets() = default;
  HeldOutTargets(Target labels, Target explanations);

  const Target& labels(const std::string& stage);
  const Target& explanations(const std::string& stage);
  const std::map<std::string, std::size_t>& audit() const { return reads_; }
  std::size_t size() const { return labels_.rows(); }

 private:
  Target labels_;
  Target explanations_;
  std::map<std::string, std::size_t> reads_;
};

/// Preprocessed data ready for the arms. `eval_features` belong to the
/// evaluation split; its targets live in `held_out`.
struct PreparedData {
  Dataset train;
  Matrix eval_features;
  HeldOutTargets held_out;
  EvaluationThresholds thresholds;
  std::vector<std::size_t> selected_features;
  std::optional<StandardizationStats> standardization;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct ArmFailure {
  std::string arm;
  std::string message;
};

struct ExperimentOutcome {
  std::optional<MetricsReport> report;
  std::vector<ArmFailure> failures;
  std::map<std::string, std::size_t> label_audit;
  std::filesystem::path run_dir;
};

/// Runs the configured arms in order. With `write_artifacts` the report,
/// manifest, checkpoints, pair batches, indices, embeddings and predictions
/// land in `output_dir/id/`.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  PreparedData& data() { return data_; }

  /// Report rows for one arm. Throws on failure, annotated with the arm name.
  std::vector<ArmResult> run_arm(Arm arm, const std::filesystem::path& artifact_dir = {});

  std::uint64_t arm_seed(std::string_view label) const;

  ExperimentOutcome run(bool write_artifacts = true);

 private:
  const Network& supervised_network(const std::string& which);
  std::vector<ArmResult> knn_rows(Arm arm, const Network& net, DistanceMetric metric,
                                  const std::filesystem::path& artifact_dir);
  ArmResult score(Arm arm, const std::string& parameter_name, std::optional<double> parameter,
                  const Target* labels, const Target* explanations);

  ExperimentConfig config_;
  PreparedData data_;
  std::map<std::string, Network> networks_;
};

std::vector<ArmResult> run_arm(const ExperimentConfig& config, Arm arm);
ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Published LASSO and random forest rows for the olfactory data, marked cited.
std::vector<ArmResult> olfactory_reference_rows();

/// Replays `config` once per grid point, scoring on the validation split.
struct SweepPoint {
  ConfigOverrides assignment;
  std::optional<MetricsReport> report;
  std::vector<ArmFailure> failures;
};

std::vector<SweepPoint> run_sweep(const std::string& config_text, const std::filesystem::path& base_dir,
                                  const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
                                  const ConfigOverrides& fixed = {});

std::string sweep_to_json(const std::vector<SweepPoint>& points);

}  // namespace ted

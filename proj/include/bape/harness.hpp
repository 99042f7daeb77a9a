#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bape/baselines.hpp"
#include "bape/classifier.hpp"
#include "bape/datagen.hpp"
#include "bape/estimation.hpp"
#include "json.hpp"

namespace bape {

// Many: more than many_above training samples; few: fewer than few_below;
// medium: everything in between (inclusive).
struct SplitThresholds {
  std::int64_t many_above = 100;
  std::int64_t few_below = 20;

  void validate() const;
};

struct SplitAccuracy {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  double all = 0.0;
};

// Per-split accuracy, grouping test samples by the training count of their
// true class. Splits without test samples are absent.
SplitAccuracy split_accuracy(std::span<const int> predictions, std::span<const int> labels,
                             std::span<const std::int64_t> train_counts,
                             const SplitThresholds& thresholds = {});

// The ceil(K * fraction) (at least two) classes with the fewest training
// samples; ties go to the higher class index.
std::vector<int> tail_classes(std::span<const std::int64_t> train_counts, double fraction);

// Prior specification for the test distribution used by adjustment:
// "uniform", "imbalance:<gamma>", "train" or an explicit weight list.
struct TargetPriorSpec {
  enum class Kind { Uniform, Imbalance, Train, Explicit };
  Kind kind = Kind::Uniform;
  double gamma = 1.0;
  std::vector<double> weights;

  static TargetPriorSpec parse(const std::string& text);
  ClassPriors resolve(std::span<const std::int64_t> train_counts) const;
};

struct GenerateSource {
  LongTailSpec train;
  TruthConfig truth;
  std::int64_t test_per_class = 1000;
  double test_gamma = 1.0;  // 1 = balanced test set
};

struct FileSource {
  std::filesystem::path train;
  std::filesystem::path test;
};

struct ExperimentConfig {
  std::optional<GenerateSource> generate;
  std::optional<FileSource> files;

  PriorHyper prior;
  EstimationMode estimation = EstimationMode::PaperApprox;
  TargetPriorSpec adjust_priors;
  KappaMode adjust_kappa = KappaMode::keep();

  TrainConfig baseline;  // mode and seed are set per run
  double eta = 1.0;
  bool joint = true;  // train an LA head on the shared stream with weight eta

  bool m0_gradient = false;
  double m0_lr = 0.05;
  int refresh_interval = 1;  // mini-batches between MAP refreshes (m0 updates)

  SplitThresholds splits;
  double tail_fraction = 0.25;
  std::vector<std::uint64_t> seeds;
  int threads = 0;  // 0 = hardware concurrency

  std::optional<std::filesystem::path> json_out;
  std::optional<std::filesystem::path> csv_out;

  // Throws ConfigError.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ReportRow {
  std::string method;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::optional<double> oracle_accuracy;
  std::optional<double> minority_collapse;
  double wall_time_s = 0.0;
};

// Method names in reports.
namespace methods {
inline constexpr const char* kBape = "bape";
inline constexpr const char* kBapeAdjust = "bape+adjust";
inline constexpr const char* kBapeAdjustSharedKappa = "bape+adjust[shared-mean]";
inline constexpr const char* kBapeAltAdjust = "bape+adjust[alt-estimation]";
inline constexpr const char* kSoftmax = "softmax";
inline constexpr const char* kLogitAdjusted = "logit_adjusted";
inline constexpr const char* kEnsemble = "ensemble[avg-log-posterior]";
inline constexpr const char* kOracle = "oracle";
}  // namespace methods

// Everything produced for one seed, for callers that need more than the
// report rows (acceptance tests, CLI diagnostics).
struct SeedArtifacts {
  Dataset train;
  Dataset test;
  std::optional<MixtureGroundTruth> truth;  // generated data only
  BapeFit bape;
  BayesClassifier bape_adjusted;
  LinearClassifier softmax;
  LinearClassifier logit_adjusted;
  LinearClassifier joint_head;
  std::vector<int> tail;
  std::int64_t stats_samples_per_epoch = 0;
  std::vector<ReportRow> rows;
};

// Runs every method for one seed.
SeedArtifacts run_seed(const ExperimentConfig& config, std::uint64_t seed);

// One row per (method, seed), sorted by (method, seed). Seeds run in
// parallel; each seed is deterministic.
std::vector<ReportRow> run_experiment(const ExperimentConfig& config);

enum class ReportFormat { Json, Csv };

// JSON: array of objects with the ReportRow field names; CSV: header plus
// one line per row. Floats use 17 significant digits; absent values are
// null (JSON) or empty (CSV).
std::string format_report(std::span<const ReportRow> rows, ReportFormat format);
void emit_report(std::span<const ReportRow> rows, ReportFormat format,
                 const std::filesystem::path& path);

// Gradient of the mean BAPE loss over a batch with respect to every prior
// direction m0 (columns of the p x K result), holding the statistics and
// features fixed. Excluded classes get zero columns.
Eigen::MatrixXd prior_direction_gradient(std::span<const ClassStats> stats,
                                         std::span<const PriorSpec> priors, EstimationMode mode,
                                         const std::vector<UnitVector>& batch_z,
                                         std::span<const int> batch_y);

}  // namespace bape

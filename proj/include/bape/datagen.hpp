#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bape/classifier.hpp"
#include "bape/random.hpp"
#include "bape/vmf.hpp"

namespace bape {

// Exponential long-tail profile N_j = round(N lambda^j), lambda = gamma^{-1/(K-1)}.
struct LongTailSpec {
  int num_classes = 10;
  std::int64_t head_size = 1000;
  double gamma = 100.0;

  double lambda() const;
  // Throws ConfigError.
  void validate() const;
};

// Round-half-up with a floor of one sample; non-increasing in j.
std::vector<std::int64_t> class_sizes(const LongTailSpec& spec);

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Labelled feature rows. Features are stored as float32, the precision of
// the feature-file format.
struct Dataset {
  FeatureMatrix features;  // n x p
  std::vector<int> labels;
  std::vector<std::int64_t> class_counts;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  int num_classes() const { return static_cast<int>(class_counts.size()); }
  Eigen::VectorXd row(std::size_t i) const;
  Eigen::MatrixXd features_as_double() const { return features.cast<double>(); }

  // Checks label range, count consistency and finiteness; throws DomainError.
  void validate() const;
};

// Builds a dataset from rows and labels, deriving class_counts.
Dataset make_dataset(FeatureMatrix features, std::vector<int> labels, int num_classes);

// The generating mixture, kept as the oracle for Bayes-optimal evaluation.
struct MixtureGroundTruth {
  std::vector<VmfParams> classes;
  ClassPriors priors;

  MixtureGroundTruth with_priors(ClassPriors p) const { return {classes, std::move(p)}; }
  BayesClassifier classifier() const;
};

enum class CenterMode { Etf, Random };

std::string_view to_string(CenterMode mode);
CenterMode parse_center_mode(std::string_view text);

struct TruthConfig {
  int dim = 32;
  double kappa_min = 10.0;
  double kappa_max = 40.0;
  CenterMode centers = CenterMode::Etf;

  void validate() const;
};

// Class centers (ETF or uniform random) and log-uniform concentrations in
// [kappa_min, kappa_max]; priors are uniform until replaced.
MixtureGroundTruth make_ground_truth(int num_classes, const TruthConfig& config,
                                     std::uint64_t seed);

// sizes[j] draws from class j using sub-stream (seed, domain, j). Rows are
// grouped by class in label order.
Dataset sample_dataset(const MixtureGroundTruth& truth, std::span<const std::int64_t> sizes,
                       std::uint64_t seed, StreamDomain domain = StreamDomain::ClassSamples);

struct GeneratedData {
  Dataset data;
  MixtureGroundTruth truth;  // priors = training class frequencies
};

GeneratedData generate(const LongTailSpec& spec, const TruthConfig& config, std::uint64_t seed);

// Accuracy of the Bayes rule with the true parameters and truth.priors.
double oracle_accuracy(const MixtureGroundTruth& truth, const Dataset& test);

// Binary: "BAPF", u32 version = 1, u32 n, u32 p, u32 K, n*p float32
// row-major, n u32 labels, all little-endian. Paths ending in ".csv" use
// the CSV form: header "label,f0,...,f{p-1}", one row per sample.
void write_features(const std::filesystem::path& path, const Dataset& data);
// CSV files carry no class count; K is max(label) + 1 unless num_classes_hint
// is larger.
Dataset read_features(const std::filesystem::path& path, int num_classes_hint = 0);

}  // namespace bape

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bape/classifier.hpp"
#include "bape/random.hpp"
#include "json.hpp"

namespace bape {

// Linear classifier z -> W z + b, W is K x p.
struct LinearClassifier {
  LinearClassifier(Eigen::MatrixXd weights, Eigen::VectorXd bias);

  int num_classes() const { return static_cast<int>(W.rows()); }
  int dim() const { return static_cast<int>(W.cols()); }
  Eigen::VectorXd logits(const Eigen::VectorXd& z) const;

  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

enum class LossMode {
  Softmax,        // p(y|z) = softmax((Wz + b) / T)_y
  LogitAdjusted,  // p(y|z) proportional to pi_y exp((w_y^T z + b_y) / T)
};

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

struct TrainConfig {
  double lr = 0.1;
  int epochs = 60;
  int batch_size = 128;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  LossMode mode = LossMode::Softmax;
  double temperature = 1.0;
  bool normalize_features = false;
  std::uint64_t seed = 0;

  // Throws ConfigError. lr = 0 is accepted (weights stay at initialization).
  void validate() const;
};

double ce_loss(const LinearClassifier& clf, const Eigen::VectorXd& z, int y, LossMode mode,
               const ClassPriors& priors, double temperature = 1.0);

struct CeGradient {
  Eigen::MatrixXd dW;
  Eigen::VectorXd db;
};

CeGradient ce_loss_grad(const LinearClassifier& clf, const Eigen::VectorXd& z, int y,
                        LossMode mode, const ClassPriors& priors, double temperature = 1.0);

// Seeded Gaussian weights with standard deviation 1/sqrt(p), zero bias.
LinearClassifier initial_classifier(int num_classes, int dim, std::uint64_t seed);

// Shuffled mini-batch partition of {0, ..., n-1} for one epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng);

// Mini-batch SGD with momentum, weight decay on W and a cosine learning-rate
// decay over total_steps. Drives both train() and the joint fit in the harness.
class SgdTrainer {
public:
  SgdTrainer(LinearClassifier init, TrainConfig config, ClassPriors priors, long total_steps);

  // One update on rows of `features` selected by `batch`; the gradient is
  // scaled by loss_weight. Returns the mean batch loss (before the update).
  // Throws TrainingDiverged on a non-finite loss.
  double step(const Eigen::MatrixXd& features, std::span<const int> labels,
              std::span<const std::size_t> batch, double loss_weight = 1.0);

  const LinearClassifier& classifier() const { return clf_; }
  long steps_taken() const { return step_; }

private:
  LinearClassifier clf_;
  TrainConfig config_;
  ClassPriors priors_;
  long total_steps_;
  long step_ = 0;
  Eigen::MatrixXd velocity_w_;
  Eigen::VectorXd velocity_b_;
};

struct TrainResult {
  LinearClassifier classifier;
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
};

// features: n x p. Logit-adjusted training uses the label frequencies as pi.
TrainResult train(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes,
                  const TrainConfig& config);

// argmax of W z + b, lowest index on ties.
int predict(const LinearClassifier& clf, const Eigen::VectorXd& z);

// Mean pairwise cosine similarity of the selected rows. Throws DomainError
// with fewer than two rows or a zero row.
double minority_collapse_metric(const Eigen::MatrixXd& rows, std::span<const int> tail_classes);
double minority_collapse_metric(const LinearClassifier& clf, std::span<const int> tail_classes);

struct NormRow {
  int label;
  std::int64_t count;
  double norm_product;  // |w_y| * mean |z| over samples of class y (0 when empty)
};

std::vector<NormRow> norm_report(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                                 std::span<const int> labels);

// {"type":"linear","p","K","W":[[...]],"b":[...]} (+ optional "counts").
nlohmann::json to_json(const LinearClassifier& clf, std::span<const std::int64_t> counts = {});
LinearClassifier linear_classifier_from_json(const nlohmann::json& doc);

}  // namespace bape

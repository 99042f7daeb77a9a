#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bape/estimation.hpp"
#include "bape/priors.hpp"
#include "bape/vmf.hpp"
#include "json.hpp"

namespace bape {

// Class probabilities pi_y: strictly positive, summing to one.
class ClassPriors {
public:
  // Normalizes non-negative weights; every weight must be > 0.
  static ClassPriors from_weights(std::span<const double> weights);
  static ClassPriors uniform(int num_classes);
  // Empirical frequencies. Empty classes get half a pseudo-sample so the
  // priors stay strictly positive.
  static ClassPriors from_counts(std::span<const std::int64_t> counts);
  // pi_j proportional to gamma^{-j/(K-1)}, the long-tailed profile with
  // imbalance factor gamma.
  static ClassPriors long_tailed(int num_classes, double gamma);

  int size() const { return static_cast<int>(values_.size()); }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](int y) const { return values_[y]; }
  Eigen::VectorXd log_values() const { return values_.array().log().matrix(); }

private:
  explicit ClassPriors(Eigen::VectorXd values) : values_(std::move(values)) {}

  Eigen::VectorXd values_;
};

// Explicit Bayes classifier over vMF class-conditionals:
//   p(y|z) proportional to pi_y exp(kappa_y mu_y^T z) / C_p(kappa_y).
//
// A class without parameters (excluded during fitting) has logit -inf and is
// never predicted. Immutable after construction; default-constructed
// instances are "not fitted".
class BayesClassifier {
public:
  BayesClassifier() = default;
  BayesClassifier(std::vector<std::optional<VmfParams>> classes, ClassPriors priors,
                  std::vector<std::int64_t> counts = {});

  bool fitted() const { return !classes_.empty(); }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  int dim() const { return dim_; }
  const std::vector<std::optional<VmfParams>>& classes() const { return classes_; }
  const ClassPriors& priors() const;
  // Training sample count per class (empty when unknown).
  const std::vector<std::int64_t>& counts() const { return counts_; }
  bool active(int y) const { return classes_.at(y).has_value(); }

  // s_y = ln pi_y - ln C_p(kappa_y) + kappa_y mu_y^T z.
  Eigen::VectorXd logits(const Eigen::VectorXd& z) const;
  // Rows kappa_y mu_y; zero rows for excluded classes.
  const Eigen::MatrixXd& weights() const { return weights_; }

private:
  std::vector<std::optional<VmfParams>> classes_;
  std::optional<ClassPriors> priors_;
  std::vector<std::int64_t> counts_;
  int dim_ = 0;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd offsets_;
};

// log p(y|z) for every class. exp() of the result sums to one.
Eigen::VectorXd log_posterior(const BayesClassifier& clf, const Eigen::VectorXd& z);
// argmax of the posterior, ties broken by the lowest class index.
int predict(const BayesClassifier& clf, const Eigen::VectorXd& z);
// -log p(y|z).
double bape_loss(const BayesClassifier& clf, const Eigen::VectorXd& z, int y);
// d loss / d z = sum_y' p(y'|z) kappa_y' mu_y' - kappa_y mu_y, treating z as a
// free vector in R^p.
Eigen::VectorXd bape_loss_grad_z(const BayesClassifier& clf, const Eigen::VectorXd& z, int y);
// Gradient with respect to v when z = v / |v|: (I - z z^T) grad_z / |v|.
Eigen::VectorXd sphere_chain_rule(const Eigen::VectorXd& grad_z, const Eigen::VectorXd& v);

struct KappaMode {
  enum class Kind { Keep, SharedMean, Fixed };
  Kind kind = Kind::Keep;
  double value = 0.0;  // used by Fixed, must be > 0

  static KappaMode keep() { return {}; }
  static KappaMode shared_mean() { return {Kind::SharedMean, 0.0}; }
  static KappaMode fixed(double v) { return {Kind::Fixed, v}; }
  // "keep", "shared-mean" / "shared_mean", "fixed:<v>".
  static KappaMode parse(const std::string& text);
  std::string to_string() const;
};

struct AdjustmentPolicy {
  ClassPriors target_priors;
  KappaMode kappa_mode;
};

// Test-time distribution adjustment: substitutes the priors and, per the
// kappa mode, the concentrations. The input classifier is not modified.
BayesClassifier adjust(const BayesClassifier& clf, const AdjustmentPolicy& policy);

struct KappaRow {
  int label;
  std::int64_t count;
  double kappa;
  double mu_norm;
};

// One row per active class. Throws NotFitted on a default-constructed classifier.
std::vector<KappaRow> kappa_report(const BayesClassifier& clf);

struct ExcludedClass {
  int label;
  std::string reason;
};

struct BapeFit {
  BayesClassifier classifier;
  std::vector<ExcludedClass> excluded;
};

// MAP-fits every class from its statistics and prior. Classes with no
// samples and a zero prior, a degenerate posterior or an unbounded
// concentration are excluded and reported. Class priors are the empirical
// frequencies of the statistics.
BapeFit fit_bape(std::span<const ClassStats> stats, std::span<const PriorSpec> priors,
                 EstimationMode mode);

// Priors built from a frame of prior directions scaled by class counts.
std::vector<PriorSpec> scaled_priors(const EtfFrame& frame, const PriorHyper& hyper,
                                     std::span<const ClassStats> stats);

// {"type":"bape","p","K","priors":[],"classes":[{"kappa","mu":[],"count"}]};
// excluded classes have "kappa": null.
nlohmann::json to_json(const BayesClassifier& clf);
BayesClassifier bayes_classifier_from_json(const nlohmann::json& doc);

}  // namespace bape

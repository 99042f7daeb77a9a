#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "bape/vmf.hpp"

namespace bape {

// Streaming sufficient statistics of one class: sample count and the
// unnormalized resultant sum(z_i). Single writer per instance.
class ClassStats {
public:
  explicit ClassStats(Eigen::Index dim);
  // Requires |resultant| <= count (+1e-6) and resultant = 0 when count = 0.
  ClassStats(std::int64_t count, Eigen::VectorXd resultant);

  std::int64_t count() const { return count_; }
  const Eigen::VectorXd& resultant() const { return resultant_; }
  Eigen::Index dim() const { return resultant_.size(); }
  // resultant / count; zero vector when empty.
  Eigen::VectorXd mean() const;

  void add(const UnitVector& z);
  void add(std::span<const UnitVector> batch);

private:
  std::int64_t count_ = 0;
  Eigen::VectorXd resultant_;
};

ClassStats update_stats(const ClassStats& stats, std::span<const UnitVector> batch);

// Conjugate prior p(mu, kappa) ~ C_p(kappa)^{-alpha0} exp(beta0 kappa m0^T mu).
// alpha0 counts pseudo-observations, beta0 is the length of their resultant
// and m0 its direction, so beta0 <= alpha0.
struct PriorSpec {
  PriorSpec(double alpha0, double beta0, UnitVector m0);

  double alpha0;
  double beta0;
  UnitVector m0;
};

// alpha = alpha0 + n, beta = |beta0 m0 + sum z|, m = (beta0 m0 + sum z) / beta.
struct PosteriorSpec {
  PosteriorSpec(double alpha, double beta, UnitVector m);

  double alpha;
  double beta;
  UnitVector m;
};

// Throws DegeneratePosterior when beta0 m0 + sum z vanishes.
PosteriorSpec posterior(const PriorSpec& prior, const ClassStats& stats);

enum class EstimationMode {
  PaperApprox,  // kappa = p beta alpha / (alpha^2 - beta^2)
  ExactRoot,    // A_p(kappa) = beta / alpha solved numerically
};

std::string_view to_string(EstimationMode mode);
EstimationMode parse_estimation_mode(std::string_view text);

// Ratios at or above this are treated as unbounded concentration.
inline constexpr double kMaxResultantRatio = 1.0 - 1e-9;
inline constexpr double kRootResidualTolerance = 1e-10;

// Concentration for a mean resultant ratio r = beta / alpha in [0, 1).
double concentration_from_ratio(int p, double ratio, EstimationMode mode);

// Solves A_p(kappa) = ratio by safeguarded Newton iteration inside a
// bracket, starting at the closed-form approximation.
double inverse_mean_resultant_ratio(int p, double ratio);

// MAP estimate: mu = m and kappa from beta/alpha.
// beta = 0 gives kappa = 0; beta/alpha >= kMaxResultantRatio throws
// ConcentrationOverflow.
VmfParams map_estimate(const PosteriorSpec& post, EstimationMode mode);

// Per-class prior hyperparameters: alpha0 = alpha_hat N_y, beta0 = beta_hat N_y.
struct PriorHyper {
  double alpha_hat = 40.0;
  double beta_hat = 8.0;

  // Throws ConfigError unless 0 <= beta_hat <= alpha_hat, both finite.
  void validate() const;
};

PriorSpec scale_prior(const PriorHyper& hyper, UnitVector m0, double class_count);

}  // namespace bape

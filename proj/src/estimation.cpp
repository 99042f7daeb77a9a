#include "bape/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bape/error.hpp"
#include "bape/special.hpp"

namespace bape {

ClassStats::ClassStats(Eigen::Index dim) : resultant_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 2) throw DomainError("ClassStats: dimension must be >= 2");
}

ClassStats::ClassStats(std::int64_t count, Eigen::VectorXd resultant)
    : count_(count), resultant_(std::move(resultant)) {
  if (resultant_.size() < 2) throw DomainError("ClassStats: dimension must be >= 2");
  if (count_ < 0) throw DomainError("ClassStats: negative count");
  if (!resultant_.allFinite()) throw DomainError("ClassStats: non-finite resultant");
  if (resultant_.norm() > static_cast<double>(count_) + 1e-6) {
    throw DomainError("ClassStats: resultant longer than the sample count");
  }
}

Eigen::VectorXd ClassStats::mean() const {
  if (count_ == 0) return Eigen::VectorXd::Zero(resultant_.size());
  return resultant_ / static_cast<double>(count_);
}

void ClassStats::add(const UnitVector& z) {
  if (z.dim() != dim()) throw DimensionMismatch("ClassStats::add", dim(), z.dim());
  resultant_ += z.vector();
  ++count_;
}

void ClassStats::add(std::span<const UnitVector> batch) {
  for (const auto& z : batch) {
    if (z.dim() != dim()) throw DimensionMismatch("ClassStats::add", dim(), z.dim());
  }
  for (const auto& z : batch) resultant_ += z.vector();
  count_ += static_cast<std::int64_t>(batch.size());
}

ClassStats update_stats(const ClassStats& stats, std::span<const UnitVector> batch) {
  ClassStats next = stats;
  next.add(batch);
  return next;
}

PriorSpec::PriorSpec(double alpha0_, double beta0_, UnitVector m0_)
    : alpha0(alpha0_), beta0(beta0_), m0(std::move(m0_)) {
  if (!std::isfinite(alpha0) || !std::isfinite(beta0) || alpha0 < 0.0 || beta0 < 0.0) {
    throw DomainError("PriorSpec: alpha0 and beta0 must be finite and >= 0");
  }
  if (beta0 > alpha0) {
    throw DomainError("PriorSpec: beta0 (" + std::to_string(beta0) + ") exceeds alpha0 (" +
                      std::to_string(alpha0) + ")");
  }
}

PosteriorSpec::PosteriorSpec(double alpha_, double beta_, UnitVector m_)
    : alpha(alpha_), beta(beta_), m(std::move(m_)) {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || beta < 0.0) {
    throw DomainError("PosteriorSpec: alpha must be finite and beta finite and >= 0");
  }
}

PosteriorSpec posterior(const PriorSpec& prior, const ClassStats& stats) {
  if (prior.m0.dim() != stats.dim()) {
    throw DimensionMismatch("posterior", prior.m0.dim(), stats.dim());
  }
  const Eigen::VectorXd u = prior.beta0 * prior.m0.vector() + stats.resultant();
  const double beta = u.norm();
  const double scale = prior.beta0 + static_cast<double>(stats.count());
  if (!(beta > 1e-14 * scale)) {
    throw DegeneratePosterior("posterior: beta0*m0 + sum(z) is the zero vector (n=" +
                              std::to_string(stats.count()) + ")");
  }
  return PosteriorSpec(prior.alpha0 + static_cast<double>(stats.count()), beta,
                       UnitVector::normalize(u));
}

std::string_view to_string(EstimationMode mode) {
  return mode == EstimationMode::PaperApprox ? "paper" : "exact";
}

EstimationMode parse_estimation_mode(std::string_view text) {
  if (text == "paper" || text == "paper_approx") return EstimationMode::PaperApprox;
  if (text == "exact" || text == "exact_root") return EstimationMode::ExactRoot;
  throw ConfigError("unknown estimation mode '" + std::string(text) + "' (paper|exact)");
}

namespace {

double paper_kappa(int p, double r) { return p * r / (1.0 - r * r); }

}  // namespace

double inverse_mean_resultant_ratio(int p, double ratio) {
  if (!(ratio >= 0.0) || !(ratio < 1.0)) {
    throw DomainError("inverse_mean_resultant_ratio: ratio must lie in [0, 1)");
  }
  if (ratio == 0.0) return 0.0;

  double lo = 0.0;
  double hi = paper_kappa(p, ratio);
  while (special::mean_resultant_ratio(p, hi) < ratio) {
    lo = hi;
    hi *= 2.0;
  }

  double kappa = hi;
  for (int iter = 0; iter < 300; ++iter) {
    const double a = special::mean_resultant_ratio(p, kappa);
    const double residual = a - ratio;
    if (residual == 0.0) return kappa;
    if (residual > 0.0) {
      hi = kappa;
    } else {
      lo = kappa;
    }
    if (hi - lo <= 4e-16 * hi) break;

    const double slope = special::mean_resultant_ratio_derivative(p, kappa);
    double next = slope > 0.0 ? kappa - residual / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == kappa) break;
    kappa = next;
  }

  // Pick the better bracket end if the last Newton iterate was not one.
  const double best = [&] {
    double pick = kappa;
    double err = std::abs(special::mean_resultant_ratio(p, kappa) - ratio);
    for (double c : {lo, hi}) {
      const double e = std::abs(special::mean_resultant_ratio(p, c) - ratio);
      if (c > 0.0 && e < err) {
        err = e;
        pick = c;
      }
    }
    return pick;
  }();
  const double residual = std::abs(special::mean_resultant_ratio(p, best) - ratio);
  if (residual > kRootResidualTolerance) {
    throw DomainError("inverse_mean_resultant_ratio: residual " + std::to_string(residual) +
                      " above tolerance");
  }
  return best;
}

double concentration_from_ratio(int p, double ratio, EstimationMode mode) {
  if (p < 2) throw DomainError("concentration_from_ratio: dimension must be >= 2");
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) {
    throw DomainError("concentration_from_ratio: ratio must be finite and >= 0");
  }
  if (ratio >= kMaxResultantRatio) {
    throw ConcentrationOverflow("beta/alpha = " + std::to_string(ratio) +
                                " is too close to 1; concentration is unbounded");
  }
  if (ratio == 0.0) return 0.0;
  return mode == EstimationMode::PaperApprox ? paper_kappa(p, ratio)
                                             : inverse_mean_resultant_ratio(p, ratio);
}

VmfParams map_estimate(const PosteriorSpec& post, EstimationMode mode) {
  if (!(post.alpha > 0.0)) throw DomainError("map_estimate: alpha must be > 0");
  const int p = static_cast<int>(post.m.dim());
  return VmfParams(post.m, concentration_from_ratio(p, post.beta / post.alpha, mode));
}

void PriorHyper::validate() const {
  if (!std::isfinite(alpha_hat) || !std::isfinite(beta_hat) || alpha_hat < 0.0 ||
      beta_hat < 0.0) {
    throw ConfigError("prior hyperparameters must be finite and >= 0");
  }
  if (beta_hat > alpha_hat) {
    throw ConfigError("beta_hat (" + std::to_string(beta_hat) + ") must not exceed alpha_hat (" +
                      std::to_string(alpha_hat) + ")");
  }
}

PriorSpec scale_prior(const PriorHyper& hyper, UnitVector m0, double class_count) {
  hyper.validate();
  if (!(class_count >= 0.0) || !std::isfinite(class_count)) {
    throw DomainError("scale_prior: class count must be finite and >= 0");
  }
  return PriorSpec(hyper.alpha_hat * class_count, hyper.beta_hat * class_count, std::move(m0));
}

}  // namespace bape

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bape/random.hpp"

namespace bape {

// A point on S^{p-1}, p >= 2.
//
// Inputs whose norm deviates from one by at most kRenormTolerance are
// renormalized; anything further off is rejected with DomainError.
class UnitVector {
public:
  static constexpr double kRenormTolerance = 1e-6;

  explicit UnitVector(Eigen::VectorXd v);

  // Normalizes any finite non-zero vector.
  static UnitVector normalize(const Eigen::VectorXd& v);
  // The i-th standard basis vector of R^p.
  static UnitVector basis(Eigen::Index p, Eigen::Index i);

  const Eigen::VectorXd& vector() const { return v_; }
  operator const Eigen::VectorXd&() const { return v_; }
  Eigen::Index dim() const { return v_.size(); }
  double operator[](Eigen::Index i) const { return v_[i]; }
  double dot(const Eigen::VectorXd& other) const;

private:
  struct Trusted {};
  UnitVector(Eigen::VectorXd v, Trusted) : v_(std::move(v)) {}

  Eigen::VectorXd v_;
};

// Mean direction and concentration of a von Mises-Fisher distribution.
// Immutable; the log normalizer is computed once at construction.
class VmfParams {
public:
  VmfParams(UnitVector mu, double kappa);

  const UnitVector& mu() const { return mu_; }
  double kappa() const { return kappa_; }
  Eigen::Index dim() const { return mu_.dim(); }
  // ln C_p(kappa).
  double log_normalizer() const { return log_normalizer_; }

private:
  UnitVector mu_;
  double kappa_;
  double log_normalizer_;
};

// kappa * mu^T z - ln C_p(kappa).
double log_density(const VmfParams& params, const Eigen::VectorXd& z);

// n i.i.d. draws. Wood's rejection sampler for t = mu^T z, a uniform
// direction in the orthogonal complement, then a Householder reflection
// taking e_1 onto mu.
std::vector<UnitVector> sample(const VmfParams& params, std::size_t n, Rng& rng);
std::vector<UnitVector> sample(const VmfParams& params, std::size_t n, std::uint64_t seed);

}  // namespace bape

#include "bape/vmf.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bape/error.hpp"
#include "bape/special.hpp"

namespace bape {

UnitVector::UnitVector(Eigen::VectorXd v) : v_(std::move(v)) {
  if (v_.size() < 2) {
    throw DomainError("UnitVector: dimension must be >= 2, got " + std::to_string(v_.size()));
  }
  if (!v_.allFinite()) throw DomainError("UnitVector: non-finite component");
  const double norm = v_.norm();
  if (std::abs(norm - 1.0) > kRenormTolerance) {
    throw DomainError("UnitVector: norm " + std::to_string(norm) + " is not 1");
  }
  // Vectors already unit to rounding are kept bit-for-bit (serialized
  // parameters must round-trip exactly).
  if (std::abs(norm - 1.0) > 8.0 * std::numeric_limits<double>::epsilon()) v_ /= norm;
}

UnitVector UnitVector::normalize(const Eigen::VectorXd& v) {
  if (v.size() < 2) {
    throw DomainError("UnitVector: dimension must be >= 2, got " + std::to_string(v.size()));
  }
  const double norm = v.norm();
  if (!std::isfinite(norm) || norm == 0.0) {
    throw DomainError("UnitVector::normalize: zero or non-finite vector");
  }
  return UnitVector(v / norm, Trusted{});
}

UnitVector UnitVector::basis(Eigen::Index p, Eigen::Index i) {
  if (i < 0 || i >= p) throw DomainError("UnitVector::basis: index out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  v[i] = 1.0;
  return UnitVector(std::move(v));
}

double UnitVector::dot(const Eigen::VectorXd& other) const {
  if (other.size() != v_.size()) throw DimensionMismatch("UnitVector::dot", v_.size(), other.size());
  return v_.dot(other);
}

VmfParams::VmfParams(UnitVector mu, double kappa) : mu_(std::move(mu)), kappa_(kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw DomainError("VmfParams: kappa must be finite and >= 0, got " + std::to_string(kappa));
  }
  log_normalizer_ = special::log_vmf_normalizer(static_cast<int>(mu_.dim()), kappa_).value;
}

double log_density(const VmfParams& params, const Eigen::VectorXd& z) {
  if (z.size() != params.dim()) throw DimensionMismatch("log_density", params.dim(), z.size());
  return params.kappa() * params.mu().vector().dot(z) - params.log_normalizer();
}

namespace {

// Draws t = mu^T z from its marginal density, proportional to
// exp(kappa t) (1 - t^2)^{(p-3)/2} on [-1, 1].
class WoodSampler {
public:
  WoodSampler(double kappa, double p) : kappa_(kappa), pm1_(p - 1.0) {
    // b = (-2k + sqrt(4k^2 + (p-1)^2)) / (p-1), rearranged to avoid cancellation.
    b_ = pm1_ / (2.0 * kappa_ + std::sqrt(4.0 * kappa_ * kappa_ + pm1_ * pm1_));
    x0_ = (1.0 - b_) / (1.0 + b_);
    c_ = kappa_ * x0_ + pm1_ * std::log(1.0 - x0_ * x0_);
  }

  double draw(Rng& rng) const {
    for (;;) {
      const double beta = rng.beta(0.5 * pm1_, 0.5 * pm1_);
      const double w = (1.0 - (1.0 + b_) * beta) / (1.0 - (1.0 - b_) * beta);
      const double u = rng.uniform();
      if (kappa_ * w + pm1_ * std::log(1.0 - x0_ * w) - c_ >= std::log(u)) return w;
    }
  }

private:
  double kappa_;
  double pm1_;
  double b_;
  double x0_;
  double c_;
};

}  // namespace

std::vector<UnitVector> sample(const VmfParams& params, std::size_t n, Rng& rng) {
  if (n == 0) throw DomainError("sample: n must be >= 1");
  const Eigen::Index p = params.dim();
  const Eigen::VectorXd& mu = params.mu().vector();

  // Householder vector h = e_1 - mu; reflection I - 2 h h^T / |h|^2 swaps e_1 and mu.
  Eigen::VectorXd h = -mu;
  h[0] += 1.0;
  const double h_sq = h.squaredNorm();
  const bool reflect = h_sq > 1e-30;

  const WoodSampler marginal(params.kappa(), static_cast<double>(p));
  std::vector<UnitVector> out;
  out.reserve(n);
  Eigen::VectorXd z(p);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = marginal.draw(rng);
    const Eigen::VectorXd v = rng.unit_vector(p - 1);
    z[0] = t;
    z.tail(p - 1) = std::sqrt(std::max(0.0, 1.0 - t * t)) * v;
    if (reflect) z -= (2.0 * h.dot(z) / h_sq) * h;
    out.push_back(UnitVector::normalize(z));
  }
  return out;
}

std::vector<UnitVector> sample(const VmfParams& params, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample(params, n, rng);
}

}  // namespace bape

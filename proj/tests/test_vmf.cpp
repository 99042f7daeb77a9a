#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bape/error.hpp"
#include "bape/special.hpp"
#include "bape/vmf.hpp"
#include "oracles.hpp"

using bape::UnitVector;
using bape::VmfParams;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Eigen::VectorXd resultant(const std::vector<UnitVector>& zs) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(zs.front().dim());
  for (const auto& z : zs) r += z.vector();
  return r;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i; else ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("UnitVector renormalizes small drift and rejects the rest") {
  const UnitVector u(vec({1.0 + 5e-7, 0.0, 0.0}));
  CHECK(std::abs(u.vector().norm() - 1.0) <= 1e-15);
  CHECK_THROWS_AS(UnitVector(vec({1.1, 0.0})), bape::DomainError);
  CHECK_THROWS_AS(UnitVector(vec({1.0})), bape::DomainError);
  CHECK_THROWS_AS(UnitVector::normalize(vec({0.0, 0.0})), bape::DomainError);
  CHECK(UnitVector::normalize(vec({3.0, 4.0}))[1] == doctest::Approx(0.8));
  CHECK(UnitVector::basis(4, 2)[2] == 1.0);
}

TEST_CASE("log_density examples") {
  const UnitVector mu3 = UnitVector::basis(3, 0);
  CHECK(bape::log_density(VmfParams(mu3, 0.0), UnitVector::normalize(vec({0.3, -0.2, 0.9}))) ==
        doctest::Approx(-std::log(4.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(bape::log_density(VmfParams(mu3, 1.0), mu3) ==
        doctest::Approx(1.0 - std::log(4.0 * std::numbers::pi * std::sinh(1.0))).epsilon(1e-13));
  CHECK(bape::log_density(VmfParams(mu3, 1.0), mu3) == doctest::Approx(-1.6926).epsilon(1e-4));

  const UnitVector mu2 = UnitVector::basis(2, 0);
  const double i0 = std::exp(oracle::log_bessel_i_series(0.0, 1.0));
  CHECK(bape::log_density(VmfParams(mu2, 1.0), UnitVector::basis(2, 1)) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi * i0)).epsilon(1e-13));

  CHECK_THROWS_AS(bape::log_density(VmfParams(mu3, 1.0), vec({1.0, 0.0})), bape::DimensionMismatch);
  CHECK_THROWS_AS(VmfParams(mu3, -1.0), bape::DomainError);
}

TEST_CASE("importance-sampling estimate of the p = 8 density integral") {
  // E_uniform[f(z)] * area(S^7) = 1, with uniform draws from a separate generator.
  const int p = 8;
  const VmfParams params(UnitVector::normalize(Eigen::VectorXd::Ones(p)), 3.0);
  std::mt19937_64 gen(12345);
  std::normal_distribution<double> n01;
  const double log_area = std::log(2.0) + 0.5 * p * std::log(std::numbers::pi) - std::lgamma(0.5 * p);
  double sum = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) {
    Eigen::VectorXd z(p);
    for (int j = 0; j < p; ++j) z[j] = n01(gen);
    sum += std::exp(bape::log_density(params, z.normalized()) + log_area);
  }
  CHECK(std::abs(sum / draws - 1.0) <= 0.02);
}

TEST_CASE("uniform sampling has a small resultant") {
  const auto zs = bape::sample(VmfParams(UnitVector::basis(8, 0), 0.0), 10000, 7);
  CHECK(resultant(zs).norm() / 10000.0 <= 0.05);
}

TEST_CASE("mean resultant length matches A_p(kappa)") {
  const auto zs = bape::sample(VmfParams(UnitVector::basis(16, 3), 20.0), 50000, 11);
  const double rbar = resultant(zs).norm() / 50000.0;
  CHECK(std::abs(rbar - bape::special::mean_resultant_ratio(16, 20.0)) <= 0.01);
}

TEST_CASE("p = 3 projection mean equals the Langevin function") {
  const UnitVector mu = UnitVector::normalize(vec({1.0, -2.0, 0.5}));
  const auto zs = bape::sample(VmfParams(mu, 2.0), 40000, 3);
  double mean = 0.0;
  for (const auto& z : zs) mean += z.dot(mu);
  mean /= 40000.0;
  // Var(mu^T z) <= 1, so 5 sigma is 0.025 at this sample size.
  CHECK(std::abs(mean - oracle::langevin(2.0)) <= 0.025);
}

TEST_CASE("extreme concentration puts every sample next to mu") {
  const UnitVector mu = UnitVector::normalize(vec({0.2, 0.3, -0.9}));
  for (const auto& z : bape::sample(VmfParams(mu, 1e6), 100, 5)) CHECK(z.dot(mu) > 0.999);
}

TEST_CASE("samples are unit vectors and seeds are reproducible") {
  const VmfParams params(UnitVector::normalize(vec({1, 2, 3, 4, 5})), 7.5);
  const auto a = bape::sample(params, 500, 42);
  const auto b = bape::sample(params, 500, 42);
  const auto c = bape::sample(params, 500, 43);
  REQUIRE(a.size() == 500);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].vector().norm() - 1.0) <= 1e-9);
    CHECK((a[i].vector().array() == b[i].vector().array()).all());
    differs = differs || (a[i].vector() - c[i].vector()).norm() > 0.0;
  }
  CHECK(differs);
}

TEST_CASE("rotation equivariance in distribution") {
  const int p = 6, n = 10000;
  const Eigen::MatrixXd q = oracle::rotation(p, 9);
  const UnitVector mu = UnitVector::normalize(vec({1, 0, 0.5, 0, 0, -1}));
  const UnitVector rmu = UnitVector::normalize(q * mu.vector());
  const auto rotated = bape::sample(VmfParams(rmu, 4.0), n, 100);
  const auto original = bape::sample(VmfParams(mu, 4.0), n, 200);

  std::vector<double> a, b, ca, cb;
  Eigen::VectorXd ra = Eigen::VectorXd::Zero(p), rb = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd za = rotated[static_cast<std::size_t>(i)].vector();
    const Eigen::VectorXd zb = q * original[static_cast<std::size_t>(i)].vector();
    a.push_back(za.dot(rmu.vector()));
    b.push_back(zb.dot(rmu.vector()));
    ca.push_back(za[0]);
    cb.push_back(zb[0]);
    ra += za;
    rb += zb;
  }
  // KS critical value at alpha = 0.001 for equal sample sizes.
  const double crit = 1.95 * std::sqrt(2.0 / n);
  CHECK(ks_statistic(a, b) < crit);
  CHECK(ks_statistic(ca, cb) < crit);
  // Mean projections on the rotated axis agree within 5 standard errors.
  auto mean_var = [](const std::vector<double>& x) {
    double m = 0.0, v = 0.0;
    for (double t : x) m += t;
    m /= static_cast<double>(x.size());
    for (double t : x) v += (t - m) * (t - m);
    return std::pair{m, v / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = mean_var(a);
  const auto [mb, vb] = mean_var(b);
  CHECK(std::abs(ma - mb) < 5.0 * std::sqrt((va + vb) / n));
  CHECK(std::abs(ra.norm() - rb.norm()) / n < 5.0 * std::sqrt((va + vb) / n));
}

TEST_CASE("sampling in two dimensions and near-zero kappa") {
  const UnitVector mu = UnitVector::basis(2, 1);
  const auto zs = bape::sample(VmfParams(mu, 1e-9), 2000, 1);
  for (const auto& z : zs) CHECK(std::abs(z.vector().norm() - 1.0) <= 1e-12);
  const auto tight = bape::sample(VmfParams(mu, 50.0), 20000, 2);
  const double rbar = resultant(tight).norm() / 20000.0;
  CHECK(std::abs(rbar - bape::special::mean_resultant_ratio(2, 50.0)) <= 0.005);
}

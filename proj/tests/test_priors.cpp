#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "bape/error.hpp"
#include "bape/priors.hpp"

using namespace bape;

namespace {

Eigen::MatrixXd expected_gram(int k) {
  return (static_cast<double>(k) / (k - 1)) *
         (Eigen::MatrixXd::Identity(k, k) - Eigen::MatrixXd::Constant(k, k, 1.0 / k));
}

}  // namespace

TEST_CASE("small frames") {
  const auto tri = build_etf(3, 2, 1);
  CHECK((tri.gram() - expected_gram(3)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(tri.gram()(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));

  const auto tet = build_etf(4, 8, 2);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(tet.gram()(i, j) - (i == j ? 1.0 : -1.0 / 3.0)) <= 1e-10);
    }
  }

  const auto pair = build_etf(2, 5, 3);
  CHECK(std::abs(pair.gram()(0, 1) + 1.0) <= 1e-10);
}

TEST_CASE("Gram matrix identity over random triples") {
  std::uint64_t seed = 11;
  for (int k : {2, 3, 5, 10, 20, 64}) {
    for (int extra : {0, 1, 7, 40}) {
      const int p = k - 1 + extra;
      if (p < 2) continue;
      const auto frame = build_etf(k, p, seed++);
      CAPTURE(k);
      CAPTURE(p);
      CHECK(frame.num_classes() == k);
      CHECK(frame.dim() == p);
      CHECK((frame.gram() - expected_gram(k)).cwiseAbs().maxCoeff() <= 1e-10);
      for (int c = 0; c < k; ++c) CHECK(std::abs(frame.matrix().col(c).norm() - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("frames are deterministic and differ by a rotation across seeds") {
  const auto a = build_etf(6, 12, 5);
  const auto b = build_etf(6, 12, 5);
  const auto c = build_etf(6, 12, 6);
  CHECK((a.matrix().array() == b.matrix().array()).all());
  CHECK((a.matrix() - c.matrix()).norm() > 1e-3);
  CHECK((a.gram() - c.gram()).cwiseAbs().maxCoeff() <= 1e-12);
  // The orthogonal map Q = C A^+ carries one frame onto the other.
  const Eigen::MatrixXd pinv = a.matrix().completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd q = c.matrix() * pinv;
  CHECK((q * a.matrix() - c.matrix()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("build_etf rejects unsupported shapes") {
  CHECK_THROWS_AS(build_etf(5, 3, 0), DomainError);
  CHECK_THROWS_AS(build_etf(1, 3, 0), DomainError);
}

TEST_CASE("grad_step_m0 geometry") {
  const auto frame = build_etf(4, 6, 9);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(6, 4);
  CHECK((grad_step_m0(frame, zero, 0.1).matrix() - frame.matrix()).norm() == 0.0);

  // Radial gradients are no-ops.
  const auto radial = grad_step_m0(frame, 3.0 * frame.matrix(), 0.1);
  CHECK((radial.matrix() - frame.matrix()).cwiseAbs().maxCoeff() <= 1e-15);

  // A small tangent step of length lr*|g| turns the column by that angle.
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, 4);
  Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(6, 1.0, -2.0);
  t -= t.dot(frame.matrix().col(2)) * frame.matrix().col(2);
  t = 0.5 * t.normalized();
  g.col(2) = t;
  const double lr = 1e-3;
  const auto moved = grad_step_m0(frame, g, lr);
  const double c = moved.matrix().col(2).dot(frame.matrix().col(2));
  CHECK(std::abs(c - std::cos(lr * t.norm())) <= 1e-9);
  CHECK(std::abs(moved.matrix().col(2).norm() - 1.0) <= 1e-15);
  CHECK((moved.matrix().col(0) - frame.matrix().col(0)).norm() == 0.0);
}

TEST_CASE("grad_step_m0 rejects bad input") {
  const auto frame = build_etf(3, 4, 1);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 3);
  g(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(grad_step_m0(frame, g, 0.1), DomainError);
  CHECK_THROWS(grad_step_m0(frame, Eigen::MatrixXd::Zero(4, 2), 0.1));
  CHECK_THROWS(grad_step_m0(frame, Eigen::MatrixXd::Zero(4, 3), 0.0));
}

TEST_CASE("from_columns normalizes and column() returns unit vectors") {
  Eigen::MatrixXd m(3, 2);
  m << 2, 0, 0, 3, 0, 0;
  const auto f = EtfFrame::from_columns(m);
  CHECK(f.column(1)[1] == 1.0);
  CHECK(f.column(0)[0] == 1.0);
}

#include "bape/priors.hpp"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "bape/error.hpp"
#include "bape/random.hpp"

namespace bape {

EtfFrame EtfFrame::from_columns(Eigen::MatrixXd columns) {
  if (columns.rows() < 2 || columns.cols() < 1) {
    throw DomainError("EtfFrame: need dimension >= 2 and at least one column");
  }
  if (!columns.allFinite()) throw DomainError("EtfFrame: non-finite entry");
  for (Eigen::Index k = 0; k < columns.cols(); ++k) {
    const double norm = columns.col(k).norm();
    if (norm == 0.0) throw DomainError("EtfFrame: zero column " + std::to_string(k));
    columns.col(k) /= norm;
  }
  return EtfFrame(std::move(columns));
}

UnitVector EtfFrame::column(int k) const {
  if (k < 0 || k >= num_classes()) throw DomainError("EtfFrame::column: index out of range");
  return UnitVector::normalize(columns_.col(k));
}

namespace {

// Orthonormal columns from a seeded Gaussian matrix, sign-fixed so that R
// has a positive diagonal.
Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

// Helmert basis of the complement of the all-ones vector: K x (K-1),
// orthonormal columns, B B^T = I - 1 1^T / K.
Eigen::MatrixXd centering_basis(Eigen::Index k) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k - 1);
  for (Eigen::Index j = 1; j < k; ++j) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(j * (j + 1)));
    b.col(j - 1).head(j).setConstant(scale);
    b(j, j - 1) = -static_cast<double>(j) * scale;
  }
  return b;
}

}  // namespace

EtfFrame build_etf(int num_classes, int dim, std::uint64_t seed) {
  if (num_classes < 2) throw DomainError("build_etf: need at least 2 classes");
  if (dim < 2 || dim < num_classes - 1) {
    throw DomainError("build_etf: unsupported dimension p=" + std::to_string(dim) +
                      " for K=" + std::to_string(num_classes) + " (requires p >= K-1)");
  }
  const Eigen::Index k = num_classes;
  const double scale = std::sqrt(static_cast<double>(k) / static_cast<double>(k - 1));
  Rng rng(seed, StreamDomain::EtfBasis, 0);

  Eigen::MatrixXd m;
  if (dim >= num_classes) {
    const Eigen::MatrixXd u = random_orthonormal(dim, k, rng);
    const Eigen::MatrixXd centering =
        Eigen::MatrixXd::Identity(k, k) - Eigen::MatrixXd::Constant(k, k, 1.0 / k);
    m = scale * u * centering;
  } else {
    const Eigen::MatrixXd u = random_orthonormal(dim, k - 1, rng);
    m = scale * u * centering_basis(k).transpose();
  }
  return EtfFrame::from_columns(std::move(m));
}

EtfFrame grad_step_m0(const EtfFrame& frame, const Eigen::MatrixXd& grads, double lr) {
  if (grads.rows() != frame.dim() || grads.cols() != frame.num_classes()) {
    throw DimensionMismatch("grad_step_m0", frame.dim() * frame.num_classes(),
                            grads.rows() * grads.cols());
  }
  if (!grads.allFinite()) throw DomainError("grad_step_m0: non-finite gradient");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("grad_step_m0: lr must be > 0");

  Eigen::MatrixXd next = frame.matrix();
  for (Eigen::Index k = 0; k < next.cols(); ++k) {
    const Eigen::VectorXd m = next.col(k);
    const Eigen::VectorXd g = grads.col(k);
    const Eigen::VectorXd tangent = g - g.dot(m) * m;
    next.col(k) = m - lr * tangent;
  }
  return EtfFrame::from_columns(std::move(next));
}

}  // namespace bape

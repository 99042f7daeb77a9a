#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "bape/vmf.hpp"

namespace bape {

// K prior directions m0^y in R^p, stored as the columns of a p x K matrix.
//
// Frames returned by build_etf form a simplex equiangular tight frame:
// unit columns with pairwise inner product -1/(K-1). grad_step_m0 keeps the
// columns on the sphere but does not preserve the equiangular structure.
class EtfFrame {
public:
  // Columns are normalized; each must be non-zero.
  static EtfFrame from_columns(Eigen::MatrixXd columns);

  int num_classes() const { return static_cast<int>(columns_.cols()); }
  int dim() const { return static_cast<int>(columns_.rows()); }
  const Eigen::MatrixXd& matrix() const { return columns_; }
  UnitVector column(int k) const;
  Eigen::MatrixXd gram() const { return columns_.transpose() * columns_; }

private:
  explicit EtfFrame(Eigen::MatrixXd columns) : columns_(std::move(columns)) {}

  Eigen::MatrixXd columns_;
};

// M = sqrt(K/(K-1)) U (I_K - 1 1^T / K) with U a seeded random p x K matrix
// with orthonormal columns (QR of a Gaussian matrix, R's diagonal made
// positive). When p = K - 1 the centering projector is factored as B B^T and
// U is p x (K-1). Throws DomainError when K < 2 or p < K - 1.
EtfFrame build_etf(int num_classes, int dim, std::uint64_t seed);

// Moves every column by -lr times the tangent part of its gradient
// (columns of grads, p x K) and renormalizes. Radial components are ignored.
// Throws DomainError for non-finite gradients or lr <= 0.
EtfFrame grad_step_m0(const EtfFrame& frame, const Eigen::MatrixXd& grads, double lr);

}  // namespace bape

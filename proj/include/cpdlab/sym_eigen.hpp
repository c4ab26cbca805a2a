#pragma once

#include <vector>

#include "cpdlab/matrix.hpp"

namespace cpdlab {

struct SymEigenResult {
  /// Ascending.
  std::vector<double> eigenvalues;
  /// Column k is the unit eigenvector of eigenvalues[k].
  Matrix eigenvectors;
  /// Largest |off-diagonal| left after the final sweep.
  double offdiag_residual = 0.0;
  int sweeps = 0;
};

inline constexpr double kDefaultEigenTol = 1e-12;
inline constexpr int kMaxJacobiSweeps = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps rotate away every off-diagonal entry in row order until the
/// off-diagonal Frobenius norm drops below tol * ||m||_F. Throws
/// NonSymmetric when |m_ij - m_ji| exceeds 1e-12 * max(1, max|m|) and
/// NoConvergence after kMaxJacobiSweeps sweeps.
SymEigenResult sym_eigen(const Matrix& m, double tol = kDefaultEigenTol);

}  // namespace cpdlab

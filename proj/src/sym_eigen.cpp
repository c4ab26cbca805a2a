#include "cpdlab/sym_eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpdlab/error.hpp"

namespace cpdlab {

namespace {

double offdiag_frobenius(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

double offdiag_max(const Matrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) best = std::max(best, std::fabs(a(i, j)));
  return best;
}

}  // namespace

SymEigenResult sym_eigen(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::DimMismatch, "sym_eigen: matrix not square");
  const std::size_t n = m.rows();
  if (!all_finite(m.data())) throw Error(ErrorCode::InvalidArgument, "sym_eigen: non-finite entry");
  const double sym_scale = std::max(1.0, max_abs(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::fabs(m(i, j) - m(j, i)) > 1e-12 * sym_scale)
        throw Error(ErrorCode::NonSymmetric, "sym_eigen: |m_ij - m_ji| exceeds 1e-12 relative");

  Matrix a = m;
  Matrix v = Matrix::identity(n);
  const double threshold = tol * norm_frobenius(m);
  SymEigenResult result;

  int sweep = 0;
  while (offdiag_frobenius(a) > threshold) {
    if (sweep == kMaxJacobiSweeps)
      throw Error(ErrorCode::NoConvergence, "sym_eigen: sweep limit exceeded");
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the classic stable formulation.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = arp - s * (arq + tau * arp);
          a(r, q) = arq + s * (arp - tau * arq);
          a(p, r) = a(r, p);
          a(q, r) = a(r, q);
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  result.eigenvalues.resize(n);
  result.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    result.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) result.eigenvectors(r, k) = v(r, order[k]);
  }
  result.offdiag_residual = offdiag_max(a);
  result.sweeps = sweep;
  return result;
}

}  // namespace cpdlab

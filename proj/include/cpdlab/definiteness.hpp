#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpdlab/kernels.hpp"
#include "cpdlab/matrix.hpp"
#include "cpdlab/rng.hpp"

namespace cpdlab {

struct GramMatrix {
  std::vector<KernelPoint> points;
  Matrix entries;

  std::size_t n() const noexcept { return entries.rows(); }
};

/// G_ij = g(y_i, y_j), rows evaluated in parallel. Each entry is computed
/// independently so the result does not depend on the thread count.
GramMatrix gram(const KernelSpec& kernel, std::vector<KernelPoint> points);

/// Single-threaded reference for `gram`.
GramMatrix gram_serial(const KernelSpec& kernel, std::vector<KernelPoint> points);

inline constexpr double kDefaultDefinitenessTol = 1e-8;

/// Sample-based verdict. `cpd == true` means no violation on this point set,
/// not a proof that the kernel is CPD.
struct DefinitenessVerdict {
  std::size_t n = 0;
  double min_eig = 0.0;
  double centered_min_eig = 0.0;
  bool pd = false;
  bool cpd = false;
  double tol = kDefaultDefinitenessTol;
  /// max(1, ||G||_inf); both thresholds are -tol * scale.
  double scale = 1.0;
};

/// P G P with P = I - 11^T / n.
Matrix center_gram(const Matrix& g);

DefinitenessVerdict certify(const GramMatrix& g, double tol = kDefaultDefinitenessTol);

/// c^T G c
double quadratic_form(const GramMatrix& g, std::span<const double> c);
double quadratic_form(const Matrix& g, std::span<const double> c);

struct CounterexampleRecord {
  std::string kernel;
  std::vector<KernelPoint> points;
  std::vector<double> c;
  double quadratic_form = 0.0;
  double constraint_sum = 0.0;
};

/// Recomputes sum_ij c_i c_j g(y_i, y_j) from the record's fields.
double recompute_quadratic_form(const KernelSpec& kernel, const CounterexampleRecord& record);

/// y1 = (1/2, 1/2), y2 = 0, c = (1, 1) under -d_Poincare.
CounterexampleRecord poincare_pd_counterexample();

/// Three bivariate diagonal Gaussians with c = (-2/5, -3/5, 1) under the
/// negative Jeffreys divergence; sum(c) = 0 yet c^T G c < 0.
CounterexampleRecord jeffreys_cpd_counterexample();

using PointSampler = std::function<KernelPoint(Rng&)>;

/// Draws `trials` point sets of size n and returns the first whose centred
/// Gram has min eigenvalue below -1e-8 * scale. The coefficients are the
/// corresponding eigenvector projected onto sum(c) = 0 and renormalised.
std::optional<CounterexampleRecord> search_violation(const KernelSpec& kernel,
                                                     const PointSampler& sampler, std::size_t n,
                                                     std::size_t trials, Rng& rng);

/// The sampler each zoo kernel is audited with: uniform [-2,2]^dim for the
/// Euclidean kernels, Beta-radius points in the unit ball for poincare,
/// random Gaussians and empirical measures for the distribution kernels.
PointSampler natural_sampler(const KernelSpec& kernel, std::size_t dim = 5);

}  // namespace cpdlab

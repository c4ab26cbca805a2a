#include "cpdlab/definiteness.hpp"

#include <algorithm>
#include <cmath>

#include "cpdlab/error.hpp"
#include "cpdlab/sampling.hpp"
#include "cpdlab/sym_eigen.hpp"

namespace cpdlab {

namespace {

// Averages G and G^T after checking they agree to 1e-12 relative.
void symmetrize(Matrix& g) {
  const std::size_t n = g.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = g(i, j);
      const double b = g(j, i);
      if (std::fabs(a - b) > 1e-12 * std::max({1.0, std::fabs(a), std::fabs(b)}))
        throw Error(ErrorCode::NonSymmetric, "gram: kernel is not symmetric on this point set");
      const double avg = 0.5 * (a + b);
      g(i, j) = avg;
      g(j, i) = avg;
    }
}

}  // namespace

GramMatrix gram(const KernelSpec& kernel, std::vector<KernelPoint> points) {
  const std::size_t n = points.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "gram: empty point set");
  Matrix g(n, n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
  // Exceptions may not escape an OpenMP region; capture the first one.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    try {
      for (std::size_t j = 0; j < n; ++j)
        g(static_cast<std::size_t>(i), j) = kernel(points[static_cast<std::size_t>(i)], points[j]);
    } catch (...) {
#pragma omp critical(cpdlab_gram_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  symmetrize(g);
  return GramMatrix{std::move(points), std::move(g)};
}

GramMatrix gram_serial(const KernelSpec& kernel, std::vector<KernelPoint> points) {
  const std::size_t n = points.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "gram: empty point set");
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = kernel(points[i], points[j]);
  symmetrize(g);
  return GramMatrix{std::move(points), std::move(g)};
}

Matrix center_gram(const Matrix& g) {
  const std::size_t n = g.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : g.row(i)) s += v;
    row_mean[i] = s * inv_n;
    total += s;
  }
  const double grand = total * inv_n * inv_n;
  // G is symmetric, so column means equal row means.
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) = g(i, j) - row_mean[i] - row_mean[j] + grand;
  return c;
}

DefinitenessVerdict certify(const GramMatrix& g, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "certify: tol must be > 0");
  DefinitenessVerdict v;
  v.n = g.n();
  v.tol = tol;
  v.scale = std::max(1.0, norm_inf(g.entries));
  v.min_eig = sym_eigen(g.entries).eigenvalues.front();
  v.centered_min_eig = sym_eigen(center_gram(g.entries)).eigenvalues.front();
  v.pd = v.min_eig >= -tol * v.scale;
  v.cpd = v.centered_min_eig >= -tol * v.scale;
  return v;
}

double quadratic_form(const Matrix& g, std::span<const double> c) {
  if (c.size() != g.rows()) throw Error(ErrorCode::DimMismatch, "quadratic_form: len(c) != n");
  double s = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) s += c[i] * dot(g.row(i), c);
  return s;
}

double quadratic_form(const GramMatrix& g, std::span<const double> c) {
  return quadratic_form(g.entries, c);
}

double recompute_quadratic_form(const KernelSpec& kernel, const CounterexampleRecord& record) {
  if (record.c.size() != record.points.size())
    throw Error(ErrorCode::DimMismatch, "counterexample: len(c) != number of points");
  double s = 0.0;
  for (std::size_t i = 0; i < record.points.size(); ++i)
    for (std::size_t j = 0; j < record.points.size(); ++j)
      s += record.c[i] * record.c[j] * kernel(record.points[i], record.points[j]);
  return s;
}

namespace {

CounterexampleRecord make_record(const KernelSpec& kernel, std::vector<KernelPoint> points,
                                 std::vector<double> c) {
  CounterexampleRecord r;
  r.kernel = kernel.name();
  r.points = std::move(points);
  r.c = std::move(c);
  r.quadratic_form = recompute_quadratic_form(kernel, r);
  r.constraint_sum = 0.0;
  for (double ci : r.c) r.constraint_sum += ci;
  return r;
}

}  // namespace

CounterexampleRecord poincare_pd_counterexample() {
  return make_record(PoincareKernel{}, {Euclidean{{0.5, 0.5}}, Euclidean{{0.0, 0.0}}}, {1.0, 1.0});
}

CounterexampleRecord jeffreys_cpd_counterexample() {
  std::vector<KernelPoint> points = {
      DiagGaussian{{2.0, 1.0}, {0.1, 1.0}},
      DiagGaussian{{-1.0, 1.0}, {0.5, 1.0}},
      DiagGaussian{{1.0, 2.0}, {1.0, 1.0}},
  };
  return make_record(NegJeffreysKernel{}, std::move(points), {-0.4, -0.6, 1.0});
}

std::optional<CounterexampleRecord> search_violation(const KernelSpec& kernel,
                                                     const PointSampler& sampler, std::size_t n,
                                                     std::size_t trials, Rng& rng) {
  if (n < 2 || trials < 1) throw Error(ErrorCode::InvalidArgument, "search_violation: need n >= 2, trials >= 1");
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<KernelPoint> points;
    points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) points.push_back(sampler(rng));
    GramMatrix g = gram(kernel, std::move(points));
    const double scale = std::max(1.0, norm_inf(g.entries));
    const SymEigenResult eig = sym_eigen(center_gram(g.entries));
    if (!(eig.eigenvalues.front() < -kDefaultDefinitenessTol * scale)) continue;

    std::vector<double> c(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = eig.eigenvectors(i, 0);
      mean += c[i];
    }
    mean /= static_cast<double>(n);
    for (double& ci : c) ci -= mean;
    const double norm = std::sqrt(squared_norm(c));
    for (double& ci : c) ci /= norm;

    CounterexampleRecord r;
    r.kernel = kernel.name();
    r.quadratic_form = quadratic_form(g, c);
    r.points = std::move(g.points);
    r.c = std::move(c);
    for (double ci : r.c) r.constraint_sum += ci;
    return r;
  }
  return std::nullopt;
}

PointSampler natural_sampler(const KernelSpec& kernel, std::size_t dim) {
  const auto& v = kernel.variant();
  if (std::holds_alternative<PoincareKernel>(v)) {
    return [dim](Rng& rng) {
      const Matrix x = sample_ball_beta(rng, 1, dim);
      return KernelPoint{Euclidean{{x.data().begin(), x.data().end()}}};
    };
  }
  if (std::holds_alternative<NegJeffreysKernel>(v)) {
    return [](Rng& rng) {
      DiagGaussian g{{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)},
                     {rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)}};
      return KernelPoint{std::move(g)};
    };
  }
  if (std::holds_alternative<Wasserstein1DKernel>(v)) {
    return [](Rng& rng) {
      const double loc = rng.uniform(-2.0, 2.0);
      const double spread = rng.uniform(0.5, 2.0);
      std::vector<double> atoms(8);
      for (double& a : atoms) a = loc + spread * rng.normal();
      return KernelPoint{Empirical1D::from_samples(std::move(atoms))};
    };
  }
  if (const auto* berg = std::get_if<BergCenteredKernel>(&v)) return natural_sampler(*berg->base, dim);
  return [dim](Rng& rng) {
    const Matrix x = sample_uniform_box(rng, 1, dim, 2.0);
    return KernelPoint{Euclidean{{x.data().begin(), x.data().end()}}};
  };
}

}  // namespace cpdlab

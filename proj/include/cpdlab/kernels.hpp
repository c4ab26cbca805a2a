#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace cpdlab {

// ---------------------------------------------------------------------------
// Points a kernel compares.

struct Euclidean {
  std::vector<double> x;
};

/// Gaussian with diagonal covariance; every variance is strictly positive.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Equal-weight empirical measure on the real line, atoms sorted ascending.
struct Empirical1D {
  std::vector<double> atoms;

  static Empirical1D from_samples(std::vector<double> samples);
};

using KernelPoint = std::variant<Euclidean, DiagGaussian, Empirical1D>;

enum class PointKind { Euclidean, DiagGaussian, Empirical1D };

PointKind point_kind(const KernelPoint& y);
const char* to_string(PointKind kind);

// ---------------------------------------------------------------------------
// Kernel zoo.

class KernelSpec;

struct CosineKernel {};
struct NsdKernel {};
struct NegDistAlphaKernel {
  double alpha = 1.0;
};
struct PoincareKernel {};
struct Wasserstein1DKernel {
  int q = 1;
};
struct NegJeffreysKernel {};
struct EpanechnikovKernel {};
/// g(y,y') - g(y,y0) - g(y0,y') + g(y0,y0)
struct BergCenteredKernel {
  std::shared_ptr<const KernelSpec> base;
  KernelPoint y0;
};

class KernelSpec {
 public:
  using Variant = std::variant<CosineKernel, NsdKernel, NegDistAlphaKernel, PoincareKernel,
                               Wasserstein1DKernel, NegJeffreysKernel, EpanechnikovKernel,
                               BergCenteredKernel>;

  KernelSpec(Variant v);  // NOLINT(google-explicit-constructor)
  template <typename K>
    requires std::is_constructible_v<Variant, K>
  KernelSpec(K k) : KernelSpec(Variant(std::move(k))) {}  // NOLINT(google-explicit-constructor)

  const Variant& variant() const noexcept { return v_; }
  PointKind point_kind() const;
  /// Stable identifier, e.g. "nsd" or "berg(poincare)".
  std::string name() const;

  double operator()(const KernelPoint& y, const KernelPoint& y2) const;

 private:
  Variant v_;
};

/// Names accepted by `parse_kernel`: cosine, nsd, neg-dist-alpha, poincare,
/// wasserstein1d, neg-jeffreys, epanechnikov.
const std::vector<std::string>& kernel_names();

/// Builds a zoo kernel from its identifier. `alpha` feeds neg-dist-alpha and
/// `q` feeds wasserstein1d.
KernelSpec parse_kernel(std::string_view name, double alpha = 1.0, int q = 1);

KernelSpec make_neg_dist_alpha(double alpha);
KernelSpec make_wasserstein1d(int q);

// ---------------------------------------------------------------------------
// Raw evaluations.

double cosine(std::span<const double> y, std::span<const double> y2);
double nsd(std::span<const double> y, std::span<const double> y2);
double neg_dist_alpha(std::span<const double> y, std::span<const double> y2, double alpha);

/// Points with norm >= 1 - kPoincareMargin are rejected.
inline constexpr double kPoincareMargin = 1e-12;

/// Hyperbolic distance on the open unit ball (nonnegative).
double poincare_dist(std::span<const double> y, std::span<const double> y2);

/// acosh(1 + u) computed without cancellation for small u >= 0.
double acosh1p(double u);

/// q-Wasserstein distance between equal-count sorted 1-D samples.
double wasserstein_1d(std::span<const double> y, std::span<const double> y2, int q);

double kl_diag_gauss(const DiagGaussian& a, const DiagGaussian& b);
double neg_jeffreys(const DiagGaussian& a, const DiagGaussian& b);
double epanechnikov(std::span<const double> y, std::span<const double> y2);

/// Centres `g` at `y0`. Throws PointKindMismatch if y0 is not a point g accepts.
KernelSpec berg_transform(const KernelSpec& g, const KernelPoint& y0);

// ---------------------------------------------------------------------------
// Ground-truth similarities h*(x, x') = g*(f*(x), f*(x')).

enum class FeatureTransform {
  PaperMap4D,  // (x1, cos x2, exp(-x3), sin(x4 - x5))
  Identity,
};

struct GroundTruthSpec {
  FeatureTransform fstar = FeatureTransform::PaperMap4D;
  KernelSpec kernel = NsdKernel{};
};

/// Throws InvalidArgument unless the kernel compares Euclidean points and
/// Poincare is paired with the identity map.
void validate(const GroundTruthSpec& spec);

std::vector<double> fstar_map(std::span<const double> x);
std::vector<double> apply_fstar(FeatureTransform fstar, std::span<const double> x);
double true_similarity(const GroundTruthSpec& spec, std::span<const double> x,
                       std::span<const double> x2);

}  // namespace cpdlab

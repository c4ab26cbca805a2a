#include "cpdlab/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "cpdlab/error.hpp"
#include "cpdlab/matrix.hpp"

namespace cpdlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const std::vector<double>& as_vector(const KernelPoint& y, const char* kernel) {
  if (const auto* e = std::get_if<Euclidean>(&y)) return e->x;
  throw Error(ErrorCode::PointKindMismatch, std::string(kernel) + " expects Euclidean points");
}

const DiagGaussian& as_gaussian(const KernelPoint& y, const char* kernel) {
  if (const auto* g = std::get_if<DiagGaussian>(&y)) return *g;
  throw Error(ErrorCode::PointKindMismatch, std::string(kernel) + " expects diagonal Gaussians");
}

const Empirical1D& as_empirical(const KernelPoint& y, const char* kernel) {
  if (const auto* m = std::get_if<Empirical1D>(&y)) return *m;
  throw Error(ErrorCode::PointKindMismatch, std::string(kernel) + " expects 1-D empirical measures");
}

void require_same_dim(std::span<const double> y, std::span<const double> y2, const char* what) {
  if (y.size() != y2.size()) throw Error(ErrorCode::DimMismatch, what);
}

void require_in_ball(std::span<const double> y) {
  if (!(std::sqrt(squared_norm(y)) < 1.0 - kPoincareMargin))
    throw Error(ErrorCode::OutsideBall, "poincare: point not inside the open unit ball");
}

}  // namespace

Empirical1D Empirical1D::from_samples(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  return Empirical1D{std::move(samples)};
}

PointKind point_kind(const KernelPoint& y) {
  return std::visit(Overloaded{[](const Euclidean&) { return PointKind::Euclidean; },
                               [](const DiagGaussian&) { return PointKind::DiagGaussian; },
                               [](const Empirical1D&) { return PointKind::Empirical1D; }},
                    y);
}

const char* to_string(PointKind kind) {
  switch (kind) {
    case PointKind::Euclidean: return "euclidean";
    case PointKind::DiagGaussian: return "diag-gaussian";
    case PointKind::Empirical1D: return "empirical1d";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

double cosine(std::span<const double> y, std::span<const double> y2) {
  require_same_dim(y, y2, "cosine: dimension mismatch");
  const double ny = std::sqrt(squared_norm(y));
  const double ny2 = std::sqrt(squared_norm(y2));
  if (ny == 0.0 || ny2 == 0.0) throw Error(ErrorCode::ZeroVector, "cosine: zero vector");
  return std::clamp(dot(y, y2) / (ny * ny2), -1.0, 1.0);
}

double nsd(std::span<const double> y, std::span<const double> y2) {
  require_same_dim(y, y2, "nsd: dimension mismatch");
  return -squared_distance(y, y2);
}

double neg_dist_alpha(std::span<const double> y, std::span<const double> y2, double alpha) {
  if (!(alpha > 0.0 && alpha <= 2.0))
    throw Error(ErrorCode::AlphaOutOfRange, "neg-dist-alpha: alpha must lie in (0, 2]");
  require_same_dim(y, y2, "neg-dist-alpha: dimension mismatch");
  const double d2 = squared_distance(y, y2);
  if (alpha == 2.0) return -d2;
  return -std::pow(d2, 0.5 * alpha);
}

double acosh1p(double u) { return std::log1p(u + std::sqrt(u * (u + 2.0))); }

double poincare_dist(std::span<const double> y, std::span<const double> y2) {
  require_same_dim(y, y2, "poincare: dimension mismatch");
  require_in_ball(y);
  require_in_ball(y2);
  const double u =
      2.0 * squared_distance(y, y2) / ((1.0 - squared_norm(y)) * (1.0 - squared_norm(y2)));
  return acosh1p(u);
}

double wasserstein_1d(std::span<const double> y, std::span<const double> y2, int q) {
  if (q != 1 && q != 2) throw Error(ErrorCode::InvalidArgument, "wasserstein1d: q must be 1 or 2");
  if (y.empty() || y.size() != y2.size())
    throw Error(ErrorCode::CountMismatch, "wasserstein1d: measures need the same atom count >= 1");
  if (!std::is_sorted(y.begin(), y.end()) || !std::is_sorted(y2.begin(), y2.end()))
    throw Error(ErrorCode::InvalidArgument, "wasserstein1d: atoms must be sorted ascending");
  const double m = static_cast<double>(y.size());
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double d = std::fabs(y[k] - y2[k]);
    s += q == 1 ? d : d * d;
  }
  return q == 1 ? s / m : std::sqrt(s / m);
}

double kl_diag_gauss(const DiagGaussian& a, const DiagGaussian& b) {
  const std::size_t k = a.mean.size();
  if (a.var.size() != k || b.mean.size() != k || b.var.size() != k)
    throw Error(ErrorCode::DimMismatch, "kl: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(a.var[i] > 0.0) || !(b.var[i] > 0.0))
      throw Error(ErrorCode::NonPositiveVariance, "kl: variances must be > 0");
    const double dm = a.mean[i] - b.mean[i];
    s += std::log(b.var[i] / a.var[i]) + a.var[i] / b.var[i] + dm * dm / b.var[i] - 1.0;
  }
  return 0.5 * s;
}

double neg_jeffreys(const DiagGaussian& a, const DiagGaussian& b) {
  return -(kl_diag_gauss(a, b) + kl_diag_gauss(b, a));
}

double epanechnikov(std::span<const double> y, std::span<const double> y2) {
  require_same_dim(y, y2, "epanechnikov: dimension mismatch");
  const double d2 = squared_distance(y, y2);
  return d2 <= 1.0 ? 1.0 - d2 : 0.0;
}

// ---------------------------------------------------------------------------

KernelSpec::KernelSpec(Variant v) : v_(std::move(v)) {
  if (const auto* k = std::get_if<NegDistAlphaKernel>(&v_)) {
    if (!(k->alpha > 0.0 && k->alpha <= 2.0))
      throw Error(ErrorCode::AlphaOutOfRange, "neg-dist-alpha: alpha must lie in (0, 2]");
  }
  if (const auto* k = std::get_if<Wasserstein1DKernel>(&v_)) {
    if (k->q != 1 && k->q != 2) throw Error(ErrorCode::InvalidArgument, "wasserstein1d: q must be 1 or 2");
  }
  if (const auto* k = std::get_if<BergCenteredKernel>(&v_)) {
    if (!k->base) throw Error(ErrorCode::InvalidArgument, "berg: missing base kernel");
    if (cpdlab::point_kind(k->y0) != k->base->point_kind())
      throw Error(ErrorCode::PointKindMismatch, "berg: y0 has the wrong point kind for the base kernel");
  }
}

PointKind KernelSpec::point_kind() const {
  return std::visit(Overloaded{[](const Wasserstein1DKernel&) { return PointKind::Empirical1D; },
                               [](const NegJeffreysKernel&) { return PointKind::DiagGaussian; },
                               [](const BergCenteredKernel& k) { return k.base->point_kind(); },
                               [](const auto&) { return PointKind::Euclidean; }},
                    v_);
}

std::string KernelSpec::name() const {
  return std::visit(Overloaded{[](const CosineKernel&) -> std::string { return "cosine"; },
                               [](const NsdKernel&) -> std::string { return "nsd"; },
                               [](const NegDistAlphaKernel&) -> std::string { return "neg-dist-alpha"; },
                               [](const PoincareKernel&) -> std::string { return "poincare"; },
                               [](const Wasserstein1DKernel&) -> std::string { return "wasserstein1d"; },
                               [](const NegJeffreysKernel&) -> std::string { return "neg-jeffreys"; },
                               [](const EpanechnikovKernel&) -> std::string { return "epanechnikov"; },
                               [](const BergCenteredKernel& k) -> std::string {
                                 return "berg(" + k.base->name() + ")";
                               }},
                    v_);
}

double KernelSpec::operator()(const KernelPoint& y, const KernelPoint& y2) const {
  return std::visit(
      Overloaded{
          [&](const CosineKernel&) { return cosine(as_vector(y, "cosine"), as_vector(y2, "cosine")); },
          [&](const NsdKernel&) { return nsd(as_vector(y, "nsd"), as_vector(y2, "nsd")); },
          [&](const NegDistAlphaKernel& k) {
            return neg_dist_alpha(as_vector(y, "neg-dist-alpha"), as_vector(y2, "neg-dist-alpha"), k.alpha);
          },
          [&](const PoincareKernel&) {
            return -poincare_dist(as_vector(y, "poincare"), as_vector(y2, "poincare"));
          },
          [&](const Wasserstein1DKernel& k) {
            return -wasserstein_1d(as_empirical(y, "wasserstein1d").atoms,
                                   as_empirical(y2, "wasserstein1d").atoms, k.q);
          },
          [&](const NegJeffreysKernel&) {
            return neg_jeffreys(as_gaussian(y, "neg-jeffreys"), as_gaussian(y2, "neg-jeffreys"));
          },
          [&](const EpanechnikovKernel&) {
            return epanechnikov(as_vector(y, "epanechnikov"), as_vector(y2, "epanechnikov"));
          },
          [&](const BergCenteredKernel& k) {
            const KernelSpec& g = *k.base;
            // The cross terms are summed first so swapping y and y2 is bit-exact.
            return g(y, y2) - (g(y, k.y0) + g(k.y0, y2)) + g(k.y0, k.y0);
          }},
      v_);
}

const std::vector<std::string>& kernel_names() {
  static const std::vector<std::string> names = {"cosine",        "nsd",          "neg-dist-alpha",
                                                 "poincare",      "wasserstein1d", "neg-jeffreys",
                                                 "epanechnikov"};
  return names;
}

KernelSpec make_neg_dist_alpha(double alpha) { return KernelSpec(NegDistAlphaKernel{alpha}); }
KernelSpec make_wasserstein1d(int q) { return KernelSpec(Wasserstein1DKernel{q}); }

KernelSpec parse_kernel(std::string_view name, double alpha, int q) {
  if (name == "cosine") return CosineKernel{};
  if (name == "nsd") return NsdKernel{};
  if (name == "neg-dist-alpha") return make_neg_dist_alpha(alpha);
  if (name == "poincare") return PoincareKernel{};
  if (name == "wasserstein1d") return make_wasserstein1d(q);
  if (name == "neg-jeffreys") return NegJeffreysKernel{};
  if (name == "epanechnikov") return EpanechnikovKernel{};
  throw Error(ErrorCode::InvalidArgument, "unknown kernel '" + std::string(name) + "'");
}

KernelSpec berg_transform(const KernelSpec& g, const KernelPoint& y0) {
  if (point_kind(y0) != g.point_kind())
    throw Error(ErrorCode::PointKindMismatch,
                std::string("berg: y0 is ") + to_string(point_kind(y0)) + ", kernel expects " +
                    to_string(g.point_kind()));
  return KernelSpec(BergCenteredKernel{std::make_shared<const KernelSpec>(g), y0});
}

// ---------------------------------------------------------------------------

void validate(const GroundTruthSpec& spec) {
  if (spec.kernel.point_kind() != PointKind::Euclidean)
    throw Error(ErrorCode::InvalidArgument,
                "ground truth: kernel '" + spec.kernel.name() + "' does not compare Euclidean features");
  if (std::holds_alternative<PoincareKernel>(spec.kernel.variant()) &&
      spec.fstar != FeatureTransform::Identity)
    throw Error(ErrorCode::InvalidArgument, "ground truth: poincare requires the identity feature map");
}

std::vector<double> fstar_map(std::span<const double> x) {
  if (x.size() < 5) throw Error(ErrorCode::DimTooSmall, "fstar: input dimension must be >= 5");
  return {x[0], std::cos(x[1]), std::exp(-x[2]), std::sin(x[3] - x[4])};
}

std::vector<double> apply_fstar(FeatureTransform fstar, std::span<const double> x) {
  if (fstar == FeatureTransform::PaperMap4D) return fstar_map(x);
  return {x.begin(), x.end()};
}

double true_similarity(const GroundTruthSpec& spec, std::span<const double> x,
                       std::span<const double> x2) {
  if (x.size() != x2.size()) throw Error(ErrorCode::DimMismatch, "true_similarity: input dims differ");
  return spec.kernel(Euclidean{apply_fstar(spec.fstar, x)}, Euclidean{apply_fstar(spec.fstar, x2)});
}

}  // namespace cpdlab

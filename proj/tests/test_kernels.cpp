#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cpdlab/error.hpp"
#include "cpdlab/kernels.hpp"
#include "cpdlab/rng.hpp"
#include "doctest.h"

using namespace cpdlab;

namespace {

using V = std::vector<double>;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

V random_vec(Rng& r, std::size_t n, double lo, double hi) {
  V v(n);
  for (double& x : v) x = r.uniform(lo, hi);
  return v;
}

V random_in_ball(Rng& r, std::size_t n) {
  V v = random_vec(r, n, -1.0, 1.0);
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  const double radius = 0.95 * r.uniform();
  for (double& x : v) x *= radius / norm;
  return v;
}

// KL(N(m1,v1) || N(m2,v2)) by trapezoid quadrature of p log(p/q).
double kl_quadrature_1d(double m1, double v1, double m2, double v2) {
  const double lo = m1 - 12 * std::sqrt(v1), hi = m1 + 12 * std::sqrt(v1);
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  auto logpdf = [](double x, double m, double v) {
    return -0.5 * std::log(2 * std::numbers::pi * v) - (x - m) * (x - m) / (2 * v);
  };
  double sum = 0;
  for (int k = 0; k <= steps; ++k) {
    const double x = lo + k * h;
    const double lp = logpdf(x, m1, v1);
    const double term = std::exp(lp) * (lp - logpdf(x, m2, v2));
    sum += (k == 0 || k == steps ? 0.5 : 1.0) * term;
  }
  return sum * h;
}

// Minimum over all m! couplings of the mean |a_i - b_pi(i)|.
double wasserstein1_brute(V a, V b) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = HUGE_VAL;
  do {
    double cost = 0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("cosine") {
  CHECK(cosine(V{3, -1, 2}, V{3, -1, 2}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(V{1, 0}, V{0, 1}) == 0.0);
  CHECK(std::abs(cosine(V{1, 1}, V{1, 0}) - 0.7071067811865475) < 1e-15);
  CHECK(code_of([] { cosine(V{0, 0}, V{1, 0}); }) == ErrorCode::ZeroVector);
  CHECK(code_of([] { cosine(V{1, 0, 0}, V{1, 0}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("nsd") {
  CHECK(nsd(V{1, 2}, V{1, 2}) == 0.0);
  CHECK(nsd(V{0, 0}, V{3, 4}) == -25.0);
  CHECK(code_of([] { nsd(V{1}, V{1, 2}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("neg_dist_alpha") {
  Rng r(1);
  for (int i = 0; i < 100; ++i) {
    const V a = random_vec(r, 4, -2, 2), b = random_vec(r, 4, -2, 2);
    CHECK(std::abs(neg_dist_alpha(a, b, 2.0) - nsd(a, b)) <= 1e-15 * (1 + std::abs(nsd(a, b))));
    CHECK(parse_kernel("neg-dist-alpha", 2.0)(Euclidean{a}, Euclidean{b}) == parse_kernel("nsd")(Euclidean{a}, Euclidean{b}));
  }
  CHECK(neg_dist_alpha(V{0, 0}, V{3, 4}, 1.0) == -5.0);
  CHECK(neg_dist_alpha(V{1, 1}, V{1, 1}, 0.3) == 0.0);
  CHECK(code_of([] { make_neg_dist_alpha(0.0); }) == ErrorCode::AlphaOutOfRange);
  CHECK(code_of([] { make_neg_dist_alpha(2.5); }) == ErrorCode::AlphaOutOfRange);
}

TEST_CASE("poincare_dist") {
  CHECK(poincare_dist(V{0.3, -0.2}, V{0.3, -0.2}) == 0.0);
  CHECK(std::abs(poincare_dist(V{0.5, 0.5}, V{0, 0}) - 1.762747174039086) < 1e-14);
  CHECK(code_of([] { poincare_dist(V{1.0, 0.0}, V{0, 0}); }) == ErrorCode::OutsideBall);
  CHECK(code_of([] { poincare_dist(V{0.0, 1.0 - 1e-13}, V{0, 0}); }) == ErrorCode::OutsideBall);
  // small arguments stay accurate: acosh(1 + u) ~ sqrt(2u)
  CHECK(std::abs(acosh1p(1e-20) - std::sqrt(2e-20)) < 1e-24);
  CHECK(std::abs(acosh1p(2.0) - std::acosh(3.0)) < 1e-15);
}

TEST_CASE("poincare_dist: symmetry and triangle inequality") {
  Rng r(2);
  for (int i = 0; i < 1000; ++i) {
    const V a = random_in_ball(r, 3), b = random_in_ball(r, 3), c = random_in_ball(r, 3);
    CHECK(std::abs(poincare_dist(a, b) - poincare_dist(b, a)) < 1e-14 * (1 + poincare_dist(a, b)));
    CHECK(poincare_dist(a, c) <= poincare_dist(a, b) + poincare_dist(b, c) + 1e-10);
  }
}

TEST_CASE("wasserstein_1d") {
  CHECK(wasserstein_1d(V{2.5}, V{-1}, 1) == 3.5);
  CHECK(wasserstein_1d(V{2.5}, V{-1}, 2) == 3.5);
  CHECK(wasserstein_1d(V{0, 1, 4}, V{0, 1, 4}, 2) == 0.0);
  CHECK(wasserstein_1d(V{0, 1}, V{1, 2}, 1) == 1.0);
  CHECK(code_of([] { wasserstein_1d(V{0, 1}, V{1}, 1); }) == ErrorCode::CountMismatch);
  CHECK(code_of([] { make_wasserstein1d(3); }) == ErrorCode::InvalidArgument);
  const auto e = Empirical1D::from_samples({3, -1, 2});
  CHECK(e.atoms == V{-1, 2, 3});
}

TEST_CASE("wasserstein_1d: q=1 matches brute-force couplings up to 6 atoms") {
  Rng r(3);
  for (std::size_t m = 1; m <= 6; ++m)
    for (int t = 0; t < 20; ++t) {
      const V a = random_vec(r, m, -3, 3), b = random_vec(r, m, -3, 3);
      const auto ea = Empirical1D::from_samples(a), eb = Empirical1D::from_samples(b);
      CHECK(std::abs(wasserstein_1d(ea.atoms, eb.atoms, 1) - wasserstein1_brute(a, b)) < 1e-12);
    }
}

TEST_CASE("kl_diag_gauss") {
  const DiagGaussian a{{1.0, -2.0}, {0.5, 2.0}};
  CHECK(kl_diag_gauss(a, a) == 0.0);
  CHECK(kl_diag_gauss({{1}, {1}}, {{0}, {1}}) == 0.5);
  CHECK(code_of([] { kl_diag_gauss({{1}, {0.0}}, {{0}, {1}}); }) == ErrorCode::NonPositiveVariance);
  CHECK(code_of([] { kl_diag_gauss({{1, 2}, {1, 1}}, {{0}, {1}}); }) == ErrorCode::DimMismatch);
  Rng r(4);
  for (int i = 0; i < 200; ++i) {
    const DiagGaussian x{random_vec(r, 3, -2, 2), random_vec(r, 3, 0.1, 3)};
    const DiagGaussian y{random_vec(r, 3, -2, 2), random_vec(r, 3, 0.1, 3)};
    CHECK(kl_diag_gauss(x, y) >= 0.0);
    CHECK(neg_jeffreys(x, y) == neg_jeffreys(y, x));
  }
}

TEST_CASE("kl_diag_gauss: closed form matches 1-D quadrature of the integral") {
  struct Case {
    double m1, v1, m2, v2;
  };
  for (const auto c : {Case{0, 1, 0, 1}, Case{1, 0.5, -0.5, 2}, Case{-2, 3, 1, 0.25}, Case{0.3, 0.1, 0.0, 1.0}}) {
    const double closed = kl_diag_gauss({{c.m1}, {c.v1}}, {{c.m2}, {c.v2}});
    CHECK(std::abs(closed - kl_quadrature_1d(c.m1, c.v1, c.m2, c.v2)) < 1e-8 * (1 + closed));
  }
}

TEST_CASE("neg_jeffreys and epanechnikov") {
  const DiagGaussian a{{0.0}, {2.0}};
  CHECK(neg_jeffreys(a, a) == 0.0);
  CHECK(epanechnikov(V{0.2, 0.4}, V{0.2, 0.4}) == 1.0);
  CHECK(epanechnikov(V{0, 0}, V{2, 0}) == 0.0);
  CHECK(epanechnikov(V{0, 0}, V{0.3, 0.4}) == 0.75);
  CHECK(code_of([] { epanechnikov(V{0}, V{0, 1}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("zoo symmetry on 1000 random pairs") {
  Rng r(5);
  const std::vector<std::pair<KernelSpec, std::size_t>> zoo = {
      {parse_kernel("cosine"), 3},        {parse_kernel("nsd"), 3},
      {make_neg_dist_alpha(0.7), 3},      {parse_kernel("poincare"), 3},
      {make_wasserstein1d(1), 1},         {make_wasserstein1d(2), 1},
      {parse_kernel("neg-jeffreys"), 2},  {parse_kernel("epanechnikov"), 2}};
  for (const auto& [k, dim] : zoo) {
    auto draw = [&]() -> KernelPoint {
      switch (k.point_kind()) {
        case PointKind::DiagGaussian: return DiagGaussian{random_vec(r, dim, -2, 2), random_vec(r, dim, 0.1, 2)};
        case PointKind::Empirical1D: return Empirical1D::from_samples(random_vec(r, 5, -2, 2));
        default: return Euclidean{k.name() == "poincare" ? random_in_ball(r, dim) : random_vec(r, dim, -1, 1)};
      }
    };
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto a = draw(), b = draw();
      const double g = k(a, b);
      worst = std::max(worst, std::abs(g - k(b, a)) / (1 + std::abs(g)));
    }
    INFO(k.name());
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("kernel names round-trip") {
  for (const auto& name : kernel_names()) CHECK(parse_kernel(name).name() == name);
  CHECK_THROWS_AS(parse_kernel("gaussian"), Error);
}

TEST_CASE("berg_transform") {
  Rng r(6);
  const auto nsd_k = parse_kernel("nsd");
  const auto g0 = berg_transform(nsd_k, Euclidean{{0, 0, 0}});
  CHECK(g0.name() == "berg(nsd)");
  for (int i = 0; i < 50; ++i) {
    const V a = random_vec(r, 3, -2, 2), b = random_vec(r, 3, -2, 2);
    const double ip = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    CHECK(std::abs(g0(Euclidean{a}, Euclidean{b}) - 2 * ip) < 1e-12 * (1 + std::abs(ip)));
  }
  // evaluated against y0 on either side it vanishes
  const auto pk = parse_kernel("poincare");
  for (int i = 0; i < 50; ++i) {
    const KernelPoint y0 = Euclidean{random_in_ball(r, 2)};
    const KernelPoint y = Euclidean{random_in_ball(r, 2)};
    const auto g = berg_transform(pk, y0);
    CHECK(g(y0, y0) == 0.0);
    CHECK(std::abs(g(y, y0)) < 1e-12);
    CHECK(std::abs(g(y0, y)) < 1e-12);
  }
  CHECK(code_of([&] { berg_transform(nsd_k, DiagGaussian{{0}, {1}}); }) == ErrorCode::PointKindMismatch);
}

TEST_CASE("fstar_map") {
  CHECK(fstar_map(V{0, 0, 0, 0, 0}) == V{0, 1, 1, 0});
  const auto f = fstar_map(V{1, 0, 0, std::numbers::pi / 2, 0});
  CHECK(f.size() == 4);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 1.0);
  CHECK(f[2] == 1.0);
  CHECK(std::abs(f[3] - 1.0) < 1e-15);
  CHECK(fstar_map(V{1, 2, 3, 4, 5, 6, 7}).size() == 4);
  CHECK(code_of([] { fstar_map(V{1, 2, 3, 4}); }) == ErrorCode::DimTooSmall);
}

TEST_CASE("true_similarity") {
  const GroundTruthSpec nsd_spec{FeatureTransform::PaperMap4D, parse_kernel("nsd")};
  CHECK(true_similarity(nsd_spec, V{0.1, 0.2, 0.3, 0.4, 0.5}, V{0.1, 0.2, 0.3, 0.4, 0.5}) == 0.0);
  const GroundTruthSpec cos_spec{FeatureTransform::PaperMap4D, parse_kernel("cosine")};
  CHECK(std::abs(true_similarity(cos_spec, V{1, 0, 0, 0, 0}, V{0, 0, 0, std::numbers::pi / 2, 0}) - 2.0 / 3.0) <
        1e-15);
  const GroundTruthSpec poin{FeatureTransform::Identity, parse_kernel("poincare")};
  CHECK(std::abs(true_similarity(poin, V{0.5, 0.5, 0, 0, 0}, V{0, 0, 0, 0, 0}) + 1.762747174039086) < 1e-14);
  CHECK_THROWS_AS(validate(GroundTruthSpec{FeatureTransform::PaperMap4D, parse_kernel("poincare")}), Error);
  CHECK_THROWS_AS(validate(GroundTruthSpec{FeatureTransform::Identity, parse_kernel("neg-jeffreys")}), Error);
}

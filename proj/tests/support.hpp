#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cpdlab/models.hpp"
#include "cpdlab/rng.hpp"

namespace cpdlab::testing {

enum class MapVariant { MlpRelu, MlpSigmoid, MlpTanh, Lookup };

inline const char* to_string(MapVariant v) {
  switch (v) {
    case MapVariant::MlpRelu: return "mlp-relu";
    case MapVariant::MlpSigmoid: return "mlp-sigmoid";
    case MapVariant::MlpTanh: return "mlp-tanh";
    case MapVariant::Lookup: return "lookup";
  }
  return "?";
}

inline std::vector<double> one_hot(std::size_t n, std::size_t i) {
  std::vector<double> x(n, 0.0);
  x[i] = 1.0;
  return x;
}

struct GradCase {
  SimilarityModel model;
  std::vector<double> x;
  std::vector<double> x2;
};

inline double min_abs_preactivation(const FeatureMap& f, std::span<const double> x) {
  const auto* m = std::get_if<MlpParams>(&f);
  if (!m) return HUGE_VAL;
  const auto cache = mlp_forward(*m, x);
  double lo = HUGE_VAL;
  for (double v : cache.pre) lo = std::min(lo, std::abs(v));
  return lo;
}

inline double min_abs_preactivation(const SimilarityModel& m, std::span<const double> x) {
  return std::visit(
      [&](const auto& h) {
        using T = std::remove_cvref_t<decltype(h)>;
        if constexpr (std::is_same_v<T, IpsModel>) return min_abs_preactivation(h.f, x);
        else if constexpr (std::is_same_v<T, SipsModel>)
          return std::min(min_abs_preactivation(h.f, x), min_abs_preactivation(h.u, x));
        else if constexpr (std::is_same_v<T, CsipsModel>) return min_abs_preactivation(h.f, x);
        else return std::min(min_abs_preactivation(h.f_plus, x), min_abs_preactivation(h.r_minus, x));
      },
      m);
}

/// Random small model with randomised (not initial) parameters. ReLU cases
/// are redrawn until no pre-activation sits within 1e-3 of the kink, so a
/// finite-difference step cannot cross it.
inline GradCase random_grad_case(Head head, MapVariant variant, Rng& rng, bool same_input = false) {
  for (;;) {
    ModelShape shape;
    shape.head = head;
    shape.kind = variant == MapVariant::Lookup ? FeatureKind::Lookup : FeatureKind::Mlp;
    shape.activation = variant == MapVariant::MlpSigmoid ? Activation::Sigmoid
                       : variant == MapVariant::MlpTanh  ? Activation::Tanh
                                                         : Activation::ReLU;
    shape.input_dim = shape.kind == FeatureKind::Lookup ? 6 : 2 + rng.next_u64() % 3;
    shape.hidden = 2 + rng.next_u64() % 4;
    shape.output_dim = 1 + rng.next_u64() % 3;
    shape.minus_dim = 1 + rng.next_u64() % 2;
    GradCase c{make_model(shape, rng), {}, {}};

    auto theta = flatten_parameters(c.model);
    for (double& t : theta) t = rng.uniform(-1.0, 1.0);
    assign_parameters(c.model, theta);

    if (shape.kind == FeatureKind::Lookup) {
      c.x = one_hot(shape.input_dim, rng.next_u64() % shape.input_dim);
      c.x2 = same_input ? c.x : one_hot(shape.input_dim, rng.next_u64() % shape.input_dim);
    } else {
      c.x.resize(shape.input_dim);
      for (double& v : c.x) v = rng.uniform(-2.0, 2.0);
      c.x2 = c.x;
      if (!same_input)
        for (double& v : c.x2) v = rng.uniform(-2.0, 2.0);
    }
    if (variant != MapVariant::MlpRelu) return c;
    if (min_abs_preactivation(c.model, c.x) > 1e-3 && min_abs_preactivation(c.model, c.x2) > 1e-3) return c;
  }
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Central differences with h = 1e-5 (1 + |theta|); relative error
/// |a - n| / max(1e-3, |a|, |n|).
inline GradCheck check_gradient(const std::function<double(std::span<const double>)>& objective,
                                std::span<const double> theta0, std::span<const double> analytic) {
  GradCheck out;
  std::vector<double> theta(theta0.begin(), theta0.end());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double t = theta[k];
    const double h = 1e-5 * (1.0 + std::abs(t));
    theta[k] = t + h;
    const double up = objective(theta);
    theta[k] = t - h;
    const double down = objective(theta);
    theta[k] = t;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({1e-3, std::abs(analytic[k]), std::abs(numeric)});
    const double err = std::abs(analytic[k] - numeric) / denom;
    if (err > out.max_rel_err) {
      out.max_rel_err = err;
      out.worst_index = k;
    }
    ++out.checked;
  }
  return out;
}

inline GradCheck check_pair_gradient(const GradCase& c) {
  const auto theta = flatten_parameters(c.model);
  const auto analytic = pair_gradient(c.model, c.x, c.x2, 1.0);
  SimilarityModel work = c.model;
  return check_gradient(
      [&](std::span<const double> th) {
        assign_parameters(work, th);
        return similarity(work, c.x, c.x2);
      },
      theta, analytic.values);
}

}  // namespace cpdlab::testing

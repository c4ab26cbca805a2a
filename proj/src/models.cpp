#include "cpdlab/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "cpdlab/error.hpp"

namespace cpdlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimMismatch, what);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid: return sigmoid(z);
    case Activation::Tanh: return std::tanh(z);
  }
  return 0.0;
}

double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 0.0;
}

const char* to_string(Head h) {
  switch (h) {
    case Head::Ips: return "ips";
    case Head::Sips: return "sips";
    case Head::Csips: return "csips";
    case Head::Mips: return "mips";
  }
  return "unknown";
}

Head parse_head(std::string_view name) {
  if (name == "ips") return Head::Ips;
  if (name == "sips") return Head::Sips;
  if (name == "csips") return Head::Csips;
  if (name == "mips") return Head::Mips;
  throw Error(ErrorCode::InvalidArgument, "unknown model head '" + std::string(name) + "'");
}

Head head_of(const SimilarityModel& m) {
  return std::visit(Overloaded{[](const IpsModel&) { return Head::Ips; },
                               [](const SipsModel&) { return Head::Sips; },
                               [](const CsipsModel&) { return Head::Csips; },
                               [](const MipsModel&) { return Head::Mips; }},
                    m);
}

std::size_t input_dim(const FeatureMap& f) {
  return std::visit([](const auto& m) { return m.input_dim(); }, f);
}

std::size_t output_dim(const FeatureMap& f) {
  return std::visit([](const auto& m) { return m.output_dim(); }, f);
}

std::size_t parameter_count(const FeatureMap& f) {
  return std::visit(Overloaded{[](const MlpParams& m) { return m.A.size() + m.B.size() + m.c.size(); },
                               [](const LookupTable& t) { return t.table.size(); }},
                    f);
}

namespace {

void validate_map(const FeatureMap& f) {
  if (const auto* m = std::get_if<MlpParams>(&f)) {
    require(m->A.cols() == m->B.rows(), "mlp: A columns must equal B rows");
    require(m->c.size() == m->B.rows(), "mlp: c length must equal hidden units");
    require(m->A.rows() >= 1 && m->B.rows() >= 1 && m->B.cols() >= 1, "mlp: empty layer");
  } else {
    const auto& t = std::get<LookupTable>(f);
    require(t.table.rows() >= 1 && t.table.cols() >= 1, "lookup: empty table");
  }
}

// Calls fn(role, map) for every feature map in declaration order, and
// fn_gamma(gamma) for the C-SIPS offset.
template <class Model, class MapFn, class GammaFn>
void for_each_part(Model& m, MapFn&& map_fn, GammaFn&& gamma_fn) {
  std::visit(
      [&](auto& s) {
        using S = std::remove_cvref_t<decltype(s)>;
        if constexpr (std::is_same_v<S, IpsModel>) {
          map_fn(s.f);
        } else if constexpr (std::is_same_v<S, SipsModel>) {
          map_fn(s.f);
          map_fn(s.u);
        } else if constexpr (std::is_same_v<S, CsipsModel>) {
          map_fn(s.f);
          gamma_fn(s.gamma);
        } else {
          map_fn(s.f_plus);
          map_fn(s.r_minus);
        }
      },
      m);
}

template <class Map, class Fn>
void for_each_block(Map& f, Fn&& fn) {
  std::visit(
      [&](auto& m) {
        using T = std::remove_cvref_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MlpParams>) {
          fn(m.A.data());
          fn(m.B.data());
          fn(std::span(m.c));
        } else {
          fn(m.table.data());
        }
      },
      f);
}

}  // namespace

void validate(const SimilarityModel& m) {
  std::size_t p = 0;
  bool first = true;
  for_each_part(
      m,
      [&](const FeatureMap& f) {
        validate_map(f);
        if (first) p = input_dim(f);
        require(input_dim(f) == p, "model: feature maps disagree on input dimension");
        first = false;
      },
      [](double) {});
  if (const auto* s = std::get_if<SipsModel>(&m)) require(output_dim(s->u) == 1, "sips: offset map must have one output");
}

// ---------------------------------------------------------------------------

MlpParams init_mlp(Rng& rng, std::size_t p, std::size_t hidden, std::size_t k, Activation act) {
  if (p == 0 || hidden == 0 || k == 0) throw Error(ErrorCode::InvalidArgument, "init_mlp: dimensions must be >= 1");
  MlpParams m;
  m.activation = act;
  m.A = Matrix(k, hidden);
  m.B = Matrix(hidden, p);
  m.c.assign(hidden, 0.0);
  const double limit_b = std::sqrt(6.0 / static_cast<double>(p + hidden));
  const double limit_a = std::sqrt(6.0 / static_cast<double>(hidden + k));
  for (double& v : m.B.data()) v = rng.uniform(-limit_b, limit_b);
  for (double& v : m.A.data()) v = rng.uniform(-limit_a, limit_a);
  return m;
}

LookupTable init_lookup(Rng& rng, std::size_t n, std::size_t k) {
  if (n == 0 || k == 0) throw Error(ErrorCode::InvalidArgument, "init_lookup: dimensions must be >= 1");
  LookupTable t{Matrix(n, k)};
  const double sd = 0.1 / std::sqrt(static_cast<double>(k));
  for (double& v : t.table.data()) v = sd * rng.normal();
  return t;
}

SimilarityModel make_model(const ModelShape& shape, Rng& rng) {
  auto make_map = [&](std::size_t k) -> FeatureMap {
    if (shape.kind == FeatureKind::Lookup) return init_lookup(rng, shape.input_dim, k);
    return init_mlp(rng, shape.input_dim, shape.hidden, k, shape.activation);
  };
  switch (shape.head) {
    case Head::Ips: return IpsModel{make_map(shape.output_dim)};
    case Head::Sips: {
      FeatureMap f = make_map(shape.output_dim);
      FeatureMap u = make_map(1);
      return SipsModel{std::move(f), std::move(u)};
    }
    case Head::Csips: return CsipsModel{make_map(shape.output_dim), 0.0};
    case Head::Mips: {
      FeatureMap fp = make_map(shape.output_dim);
      FeatureMap rm = make_map(shape.minus_dim == 0 ? shape.output_dim : shape.minus_dim);
      return MipsModel{std::move(fp), std::move(rm)};
    }
  }
  throw Error(ErrorCode::InvalidArgument, "make_model: unknown head");
}

// ---------------------------------------------------------------------------

MlpCache mlp_forward(const MlpParams& m, std::span<const double> x) {
  require(x.size() == m.input_dim(), "mlp_forward: input dimension mismatch");
  const std::size_t hidden = m.hidden();
  MlpCache cache;
  cache.pre.resize(hidden);
  cache.hidden.resize(hidden);
  for (std::size_t t = 0; t < hidden; ++t) {
    double s = m.c[t];
    const auto brow = m.B.row(t);
    for (std::size_t j = 0; j < x.size(); ++j) s += brow[j] * x[j];
    cache.pre[t] = s;
    cache.hidden[t] = activate(m.activation, s);
  }
  cache.out.resize(m.output_dim());
  for (std::size_t k = 0; k < m.output_dim(); ++k) {
    double s = 0.0;
    const auto arow = m.A.row(k);
    for (std::size_t t = 0; t < hidden; ++t) s += arow[t] * cache.hidden[t];
    cache.out[k] = s;
  }
  return cache;
}

MlpGrads mlp_backward(const MlpParams& m, std::span<const double> x, const MlpCache& cache,
                      std::span<const double> upstream) {
  require(x.size() == m.input_dim(), "mlp_backward: input dimension mismatch");
  require(upstream.size() == m.output_dim(), "mlp_backward: upstream dimension mismatch");
  require(cache.pre.size() == m.hidden(), "mlp_backward: cache does not match the network");
  const std::size_t hidden = m.hidden();
  const std::size_t k_out = m.output_dim();
  MlpGrads g{Matrix(k_out, hidden), Matrix(hidden, x.size()), std::vector<double>(hidden, 0.0),
             std::vector<double>(x.size(), 0.0)};
  for (std::size_t k = 0; k < k_out; ++k)
    for (std::size_t t = 0; t < hidden; ++t) g.A(k, t) = upstream[k] * cache.hidden[t];
  for (std::size_t t = 0; t < hidden; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < k_out; ++k) s += upstream[k] * m.A(k, t);
    const double delta = s * activate_derivative(m.activation, cache.pre[t]);
    g.c[t] = delta;
    for (std::size_t j = 0; j < x.size(); ++j) {
      g.B(t, j) = delta * x[j];
      g.x[j] += delta * m.B(t, j);
    }
  }
  return g;
}

std::vector<double> feature_forward(const FeatureMap& f, std::span<const double> x) {
  return std::visit(Overloaded{[&](const MlpParams& m) { return mlp_forward(m, x).out; },
                               [&](const LookupTable& t) {
                                 require(x.size() == t.input_dim(), "lookup: input must be an n-dim 1-hot vector");
                                 std::vector<double> out(t.output_dim(), 0.0);
                                 for (std::size_t r = 0; r < x.size(); ++r) {
                                   if (x[r] == 0.0) continue;
                                   for (std::size_t k = 0; k < out.size(); ++k) out[k] += x[r] * t.table(r, k);
                                 }
                                 return out;
                               }},
                    f);
}

namespace {

// Accumulates d<upstream, f(x)>/d(params) into grad.
void feature_backward(const FeatureMap& f, std::span<const double> x, std::span<const double> upstream,
                      std::span<double> grad) {
  std::visit(Overloaded{[&](const MlpParams& m) {
                          const MlpGrads g = mlp_backward(m, x, mlp_forward(m, x), upstream);
                          std::size_t o = 0;
                          for (double v : g.A.data()) grad[o++] += v;
                          for (double v : g.B.data()) grad[o++] += v;
                          for (double v : g.c) grad[o++] += v;
                        },
                        [&](const LookupTable& t) {
                          require(upstream.size() == t.output_dim(), "lookup: upstream dimension mismatch");
                          for (std::size_t r = 0; r < x.size(); ++r) {
                            if (x[r] == 0.0) continue;
                            for (std::size_t k = 0; k < t.output_dim(); ++k)
                              grad[r * t.output_dim() + k] += x[r] * upstream[k];
                          }
                        }},
             f);
}

std::vector<double> scaled(std::span<const double> v, double a) {
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x *= a;
  return out;
}

}  // namespace

double ips(const IpsModel& m, std::span<const double> x, std::span<const double> x2) {
  return dot(feature_forward(m.f, x), feature_forward(m.f, x2));
}

double sips(const SipsModel& m, std::span<const double> x, std::span<const double> x2) {
  const double offsets = feature_forward(m.u, x)[0] + feature_forward(m.u, x2)[0];
  return dot(feature_forward(m.f, x), feature_forward(m.f, x2)) + offsets;
}

double csips(const CsipsModel& m, std::span<const double> x, std::span<const double> x2) {
  return dot(feature_forward(m.f, x), feature_forward(m.f, x2)) - m.gamma;
}

double mips(const MipsModel& m, std::span<const double> x, std::span<const double> x2) {
  return dot(feature_forward(m.f_plus, x), feature_forward(m.f_plus, x2)) -
         dot(feature_forward(m.r_minus, x), feature_forward(m.r_minus, x2));
}

double similarity(const SimilarityModel& m, std::span<const double> x, std::span<const double> x2) {
  return std::visit(Overloaded{[&](const IpsModel& s) { return ips(s, x, x2); },
                               [&](const SipsModel& s) { return sips(s, x, x2); },
                               [&](const CsipsModel& s) { return csips(s, x, x2); },
                               [&](const MipsModel& s) { return mips(s, x, x2); }},
                    m);
}

MipsModel sips_to_mips(const SipsModel& s) {
  validate(SimilarityModel{s});
  if (const auto* f = std::get_if<MlpParams>(&s.f)) {
    const auto* u = std::get_if<MlpParams>(&s.u);
    if (u == nullptr || u->activation != f->activation)
      throw Error(ErrorCode::InvalidArgument, "sips_to_mips: f and u must be MLPs with the same activation");
    // One hidden unit with zero input weights and bias `bias_one` emits a
    // constant; scaled by `weight_one` it is exactly 1.
    double bias_one = 1.0;
    double weight_one = 1.0;
    if (f->activation == Activation::Sigmoid) {
      bias_one = 0.0;
      weight_one = 2.0;
    } else if (f->activation == Activation::Tanh) {
      bias_one = 20.0;
    }
    if (activate(f->activation, bias_one) * weight_one != 1.0)
      throw Error(ErrorCode::InvalidArgument, "sips_to_mips: cannot represent the constant unit");

    const std::size_t p = f->input_dim();
    const std::size_t tf = f->hidden();
    const std::size_t tu = u->hidden();
    const std::size_t k = f->output_dim();

    MlpParams plus;
    plus.activation = f->activation;
    plus.B = Matrix(tf + tu + 1, p);
    plus.c.assign(tf + tu + 1, 0.0);
    plus.A = Matrix(k + 2, tf + tu + 1);
    for (std::size_t t = 0; t < tf; ++t) {
      for (std::size_t j = 0; j < p; ++j) plus.B(t, j) = f->B(t, j);
      plus.c[t] = f->c[t];
      for (std::size_t r = 0; r < k; ++r) plus.A(r, t) = f->A(r, t);
    }
    for (std::size_t t = 0; t < tu; ++t) {
      for (std::size_t j = 0; j < p; ++j) plus.B(tf + t, j) = u->B(t, j);
      plus.c[tf + t] = u->c[t];
      plus.A(k, tf + t) = u->A(0, t);
    }
    plus.c[tf + tu] = bias_one;
    plus.A(k + 1, tf + tu) = weight_one;

    MlpParams minus;
    minus.activation = u->activation;
    minus.B = Matrix(tu + 1, p);
    minus.c.assign(tu + 1, 0.0);
    minus.A = Matrix(1, tu + 1);
    for (std::size_t t = 0; t < tu; ++t) {
      for (std::size_t j = 0; j < p; ++j) minus.B(t, j) = u->B(t, j);
      minus.c[t] = u->c[t];
      minus.A(0, t) = u->A(0, t);
    }
    minus.c[tu] = bias_one;
    minus.A(0, tu) = -weight_one;
    return MipsModel{std::move(plus), std::move(minus)};
  }

  const auto& f = std::get<LookupTable>(s.f);
  const auto* u = std::get_if<LookupTable>(&s.u);
  if (u == nullptr) throw Error(ErrorCode::InvalidArgument, "sips_to_mips: f and u must be the same map kind");
  // Exact for 1-hot inputs, where a row's entries sum to one.
  const std::size_t n = f.input_dim();
  const std::size_t k = f.output_dim();
  LookupTable plus{Matrix(n, k + 2)};
  LookupTable minus{Matrix(n, 1)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) plus.table(r, c) = f.table(r, c);
    plus.table(r, k) = u->table(r, 0);
    plus.table(r, k + 1) = 1.0;
    minus.table(r, 0) = u->table(r, 0) - 1.0;
  }
  return MipsModel{std::move(plus), std::move(minus)};
}

// ---------------------------------------------------------------------------

std::size_t parameter_count(const SimilarityModel& m) {
  std::size_t n = 0;
  for_each_part(m, [&](const FeatureMap& f) { n += parameter_count(f); }, [&](double) { ++n; });
  return n;
}

std::vector<ParamTag> parameter_tags(const SimilarityModel& m) {
  std::vector<ParamTag> tags;
  tags.reserve(parameter_count(m));
  bool second_map = false;
  for_each_part(
      m,
      [&](const FeatureMap& f) {
        const bool offset = second_map;
        second_map = true;
        if (const auto* mlp = std::get_if<MlpParams>(&f)) {
          tags.insert(tags.end(), mlp->A.size() + mlp->B.size(), ParamTag{ParamGroup::Weight, offset});
          tags.insert(tags.end(), mlp->c.size(), ParamTag{ParamGroup::Bias, offset});
        } else {
          tags.insert(tags.end(), parameter_count(f), ParamTag{ParamGroup::Weight, offset});
        }
      },
      [&](double) { tags.push_back(ParamTag{ParamGroup::Gamma, false}); });
  return tags;
}

std::vector<double> flatten_parameters(const SimilarityModel& m) {
  std::vector<double> theta;
  theta.reserve(parameter_count(m));
  for_each_part(
      m,
      [&](const FeatureMap& f) {
        for_each_block(f, [&](std::span<const double> b) { theta.insert(theta.end(), b.begin(), b.end()); });
      },
      [&](double g) { theta.push_back(g); });
  return theta;
}

void assign_parameters(SimilarityModel& m, std::span<const double> theta) {
  if (theta.size() != parameter_count(m))
    throw Error(ErrorCode::DimMismatch, "assign_parameters: wrong parameter count");
  std::size_t o = 0;
  for_each_part(
      m,
      [&](FeatureMap& f) {
        for_each_block(f, [&](std::span<double> b) {
          for (double& v : b) v = theta[o++];
        });
      },
      [&](double& g) { g = theta[o++]; });
}

Gradients pair_gradient(const SimilarityModel& m, std::span<const double> x, std::span<const double> x2,
                        double upstream) {
  Gradients g{std::vector<double>(parameter_count(m), 0.0)};
  std::span<double> all(g.values);

  // Gradient of sign * upstream * <f(x), f(x2)> into the block at `offset`.
  auto inner = [&](const FeatureMap& f, std::size_t offset, double sign) {
    const auto fx = feature_forward(f, x);
    const auto fx2 = feature_forward(f, x2);
    auto block = all.subspan(offset, parameter_count(f));
    feature_backward(f, x, scaled(fx2, sign * upstream), block);
    feature_backward(f, x2, scaled(fx, sign * upstream), block);
  };

  std::visit(Overloaded{[&](const IpsModel& s) { inner(s.f, 0, 1.0); },
                        [&](const SipsModel& s) {
                          inner(s.f, 0, 1.0);
                          auto block = all.subspan(parameter_count(s.f), parameter_count(s.u));
                          const double up[1] = {upstream};
                          feature_backward(s.u, x, up, block);
                          feature_backward(s.u, x2, up, block);
                        },
                        [&](const CsipsModel& s) {
                          inner(s.f, 0, 1.0);
                          all.back() = -upstream;
                        },
                        [&](const MipsModel& s) {
                          inner(s.f_plus, 0, 1.0);
                          inner(s.r_minus, parameter_count(s.f_plus), -1.0);
                        }},
             m);
  return g;
}

// ---------------------------------------------------------------------------

BatchCache feature_forward_batch(const FeatureMap& f, const Matrix& x) {
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
  BatchCache cache;
  if (const auto* m = std::get_if<MlpParams>(&f)) {
    require(x.cols() == m->input_dim(), "feature_forward_batch: input dimension mismatch");
    const std::size_t hidden = m->hidden();
    const std::size_t k_out = m->output_dim();
    cache.pre = Matrix(x.rows(), hidden);
    cache.hidden = Matrix(x.rows(), hidden);
    cache.out = Matrix(x.rows(), k_out);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const auto xi = x.row(i);
      for (std::size_t t = 0; t < hidden; ++t) {
        double s = m->c[t];
        const auto brow = m->B.row(t);
        for (std::size_t j = 0; j < xi.size(); ++j) s += brow[j] * xi[j];
        cache.pre(i, t) = s;
        cache.hidden(i, t) = activate(m->activation, s);
      }
      for (std::size_t k = 0; k < k_out; ++k) {
        double s = 0.0;
        const auto arow = m->A.row(k);
        for (std::size_t t = 0; t < hidden; ++t) s += arow[t] * cache.hidden(i, t);
        cache.out(i, k) = s;
      }
    }
    return cache;
  }
  const auto& t = std::get<LookupTable>(f);
  require(x.cols() == t.input_dim(), "feature_forward_batch: lookup input dimension mismatch");
  cache.out = Matrix(x.rows(), t.output_dim());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t r = 0; r < x.cols(); ++r) {
      const double xr = x(i, r);
      if (xr == 0.0) continue;
      for (std::size_t k = 0; k < t.output_dim(); ++k) cache.out(i, k) += xr * t.table(r, k);
    }
  }
  return cache;
}

void feature_backward_batch(const FeatureMap& f, const Matrix& x, const BatchCache& cache,
                            const Matrix& upstream, std::span<double> grad) {
  require(grad.size() == parameter_count(f), "feature_backward_batch: gradient span has the wrong length");
  require(upstream.rows() == x.rows() && upstream.cols() == output_dim(f),
          "feature_backward_batch: upstream shape mismatch");
  const std::size_t n = x.rows();

  if (const auto* m = std::get_if<MlpParams>(&f)) {
    const std::size_t hidden = m->hidden();
    const std::size_t k_out = m->output_dim();
    const std::size_t p = m->input_dim();
    auto gA = grad.subspan(0, k_out * hidden);
    auto gB = grad.subspan(k_out * hidden, hidden * p);
    auto gc = grad.subspan(k_out * hidden + hidden * p, hidden);

    const auto ka = static_cast<std::ptrdiff_t>(k_out * hidden);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < ka; ++e) {
      const std::size_t k = static_cast<std::size_t>(e) / hidden;
      const std::size_t t = static_cast<std::size_t>(e) % hidden;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += upstream(i, k) * cache.hidden(i, t);
      gA[static_cast<std::size_t>(e)] += s;
    }

    Matrix delta(n, hidden);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      for (std::size_t t = 0; t < hidden; ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < k_out; ++k) s += upstream(i, k) * m->A(k, t);
        delta(i, t) = s * activate_derivative(m->activation, cache.pre(i, t));
      }
    }

    const auto th = static_cast<std::ptrdiff_t>(hidden);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t tt = 0; tt < th; ++tt) {
      const auto t = static_cast<std::size_t>(tt);
      double sc = 0.0;
      for (std::size_t i = 0; i < n; ++i) sc += delta(i, t);
      gc[t] += sc;
      for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += delta(i, t) * x(i, j);
        gB[t * p + j] += s;
      }
    }
    return;
  }

  const auto& t = std::get<LookupTable>(f);
  const std::size_t k_out = t.output_dim();
  const auto nodes = static_cast<std::ptrdiff_t>(t.input_dim());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < nodes; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    for (std::size_t k = 0; k < k_out; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double xr = x(i, r);
        if (xr != 0.0) s += xr * upstream(i, k);
      }
      grad[r * k_out + k] += s;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "cpdlab-model";
constexpr int kModelVersion = 1;

json map_to_json(const FeatureMap& f, const char* role) {
  json j;
  j["role"] = role;
  std::visit(Overloaded{[&](const MlpParams& m) {
                          j["kind"] = "mlp";
                          j["activation"] = to_string(m.activation);
                          j["p"] = m.input_dim();
                          j["T"] = m.hidden();
                          j["K"] = m.output_dim();
                          j["A"] = std::vector<double>(m.A.data().begin(), m.A.data().end());
                          j["B"] = std::vector<double>(m.B.data().begin(), m.B.data().end());
                          j["c"] = m.c;
                        },
                        [&](const LookupTable& t) {
                          j["kind"] = "lookup";
                          j["n"] = t.input_dim();
                          j["K"] = t.output_dim();
                          j["table"] = std::vector<double>(t.table.data().begin(), t.table.data().end());
                        }},
             f);
  return j;
}

Matrix matrix_from(const json& values, std::size_t rows, std::size_t cols) {
  const auto v = values.get<std::vector<double>>();
  if (v.size() != rows * cols) throw Error(ErrorCode::SchemaError, "model file: array has the wrong length");
  Matrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

FeatureMap map_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "mlp") {
    MlpParams m;
    m.activation = parse_activation(j.at("activation").get<std::string>());
    const auto p = j.at("p").get<std::size_t>();
    const auto t = j.at("T").get<std::size_t>();
    const auto k = j.at("K").get<std::size_t>();
    m.A = matrix_from(j.at("A"), k, t);
    m.B = matrix_from(j.at("B"), t, p);
    m.c = j.at("c").get<std::vector<double>>();
    if (m.c.size() != t) throw Error(ErrorCode::SchemaError, "model file: c has the wrong length");
    return m;
  }
  if (kind == "lookup") {
    const auto n = j.at("n").get<std::size_t>();
    const auto k = j.at("K").get<std::size_t>();
    return LookupTable{matrix_from(j.at("table"), n, k)};
  }
  throw Error(ErrorCode::SchemaError, "model file: unknown feature map kind '" + kind + "'");
}

const FeatureMap& primary_map(const SimilarityModel& m) {
  return std::visit(Overloaded{[](const IpsModel& s) -> const FeatureMap& { return s.f; },
                               [](const SipsModel& s) -> const FeatureMap& { return s.f; },
                               [](const CsipsModel& s) -> const FeatureMap& { return s.f; },
                               [](const MipsModel& s) -> const FeatureMap& { return s.f_plus; }},
                    m);
}

}  // namespace

std::string model_to_json(const SimilarityModel& m) {
  json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelVersion;
  doc["head"] = to_string(head_of(m));
  const FeatureMap& f = primary_map(m);
  const auto* mlp = std::get_if<MlpParams>(&f);
  doc["feature_map"] = mlp ? "mlp" : "lookup";
  doc["p"] = input_dim(f);
  doc["K"] = output_dim(f);
  doc["T"] = mlp ? mlp->hidden() : 0;
  doc["activation"] = mlp ? to_string(mlp->activation) : "none";
  json maps = json::array();
  std::visit(Overloaded{[&](const IpsModel& s) { maps.push_back(map_to_json(s.f, "f")); },
                        [&](const SipsModel& s) {
                          maps.push_back(map_to_json(s.f, "f"));
                          maps.push_back(map_to_json(s.u, "u"));
                        },
                        [&](const CsipsModel& s) {
                          maps.push_back(map_to_json(s.f, "f"));
                          doc["gamma"] = s.gamma;
                        },
                        [&](const MipsModel& s) {
                          maps.push_back(map_to_json(s.f_plus, "f_plus"));
                          maps.push_back(map_to_json(s.r_minus, "r_minus"));
                        }},
             m);
  doc["maps"] = std::move(maps);
  return doc.dump();
}

SimilarityModel model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file: ") + e.what());
  }
  try {
    if (doc.at("format") != kModelFormat) throw Error(ErrorCode::SchemaError, "model file: unknown format");
    if (doc.at("version") != kModelVersion) throw Error(ErrorCode::SchemaError, "model file: unsupported version");
    const Head head = parse_head(doc.at("head").get<std::string>());
    const auto& maps = doc.at("maps");
    auto map_at = [&](std::size_t i) { return map_from_json(maps.at(i)); };
    SimilarityModel m;
    switch (head) {
      case Head::Ips: m = IpsModel{map_at(0)}; break;
      case Head::Sips: m = SipsModel{map_at(0), map_at(1)}; break;
      case Head::Csips: m = CsipsModel{map_at(0), doc.at("gamma").get<double>()}; break;
      case Head::Mips: m = MipsModel{map_at(0), map_at(1)}; break;
    }
    validate(m);
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file: ") + e.what());
  }
}

void save_model(const SimilarityModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write model file " + path);
  out << model_to_json(m) << '\n';
}

SimilarityModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read model file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace cpdlab

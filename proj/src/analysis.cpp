#include "cpdlab/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "cpdlab/sampling.hpp"

namespace cpdlab {

namespace {

using nlohmann::json;

json point_to_json(const KernelPoint& y) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::remove_cvref_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Euclidean>) return json{{"euclidean", p.x}};
        else if constexpr (std::is_same_v<T, DiagGaussian>) return json{{"mean", p.mean}, {"var", p.var}};
        else return json{{"atoms", p.atoms}};
      },
      y);
}

json record_to_json(const CounterexampleRecord& r) {
  json pts = json::array();
  for (const auto& y : r.points) pts.push_back(point_to_json(y));
  return json{{"kernel", r.kernel},
              {"coefficients", r.c},
              {"quadratic_form", r.quadratic_form},
              {"constraint_sum", r.constraint_sum},
              {"points", std::move(pts)}};
}

}  // namespace

// ---------------------------------------------------------------------------

double nsd_ips_lower_bound(std::size_t p, double half_width) {
  return 2.0 * static_cast<double>(p) * half_width * half_width / 3.0;
}

double ips_nsd_mae(const SimilarityModel& ips_model, std::size_t p, double half_width, std::size_t n_pairs,
                   Rng& rng) {
  const Matrix a = sample_uniform_box(rng, n_pairs, p, half_width);
  const Matrix b = sample_uniform_box(rng, n_pairs, p, half_width);
  const BatchCache fa = feature_forward_batch(std::get<IpsModel>(ips_model).f, a);
  const BatchCache fb = feature_forward_batch(std::get<IpsModel>(ips_model).f, b);
  double total = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i)
    total += std::fabs(-squared_distance(a.row(i), b.row(i)) - dot(fa.out.row(i), fb.out.row(i)));
  return total / static_cast<double>(n_pairs);
}

LowerBoundReport verify_lower_bound(const LowerBoundConfig& config) {
  if (config.p < 1 || !(config.half_width > 0.0))
    throw Error(ErrorCode::InvalidArgument, "lower-bound: need p >= 1 and M > 0");
  if (config.n_mc < 10000) throw Error(ErrorCode::InvalidArgument, "lower-bound: n_mc must be >= 10^4");

  LowerBoundReport report;
  report.p = config.p;
  report.half_width = config.half_width;
  report.bound = nsd_ips_lower_bound(config.p, config.half_width);
  report.n_mc = config.n_mc;

  DatasetSpec spec;
  spec.kernel = NsdKernel{};
  spec.fstar = FeatureTransform::Identity;
  spec.p = config.p;
  spec.n_train = config.n_train;
  spec.n_test = config.n_test;
  spec.input_law = InputLaw::UniformBox;
  spec.half_width = config.half_width;
  spec.seed = derive_seed(config.seed, hash_key("lower-bound/data"));
  const Dataset dataset = synth_dataset(spec);

  for (std::size_t T : config.units) {
    for (std::size_t K : config.dims) {
      ModelShape shape;
      shape.head = Head::Ips;
      shape.input_dim = config.p;
      shape.hidden = T;
      shape.output_dim = K;
      Rng init(derive_seed(config.seed, hash_key("lower-bound/init/" + std::to_string(T) + "/" + std::to_string(K))));
      SimilarityModel m = make_model(shape, init);
      const TrainReport tr = gd_train(m, dataset, config.train);
      Rng mc(derive_seed(config.seed, hash_key("lower-bound/mc/" + std::to_string(T) + "/" + std::to_string(K))));
      LowerBoundEntry e;
      e.T = T;
      e.K = K;
      e.empirical_mae = ips_nsd_mae(m, config.p, config.half_width, config.n_mc, mc);
      e.margin = e.empirical_mae - report.bound;
      e.mspe_test = tr.mspe_test;
      report.entries.push_back(e);
    }
  }
  return report;
}

std::string to_json(const LowerBoundReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back(json{{"T", e.T}, {"K", e.K}, {"empirical_mae", e.empirical_mae}, {"margin", e.margin},
                           {"mspe_test", e.mspe_test}});
  return json{{"p", r.p}, {"M", r.half_width}, {"bound", r.bound}, {"n_mc", r.n_mc}, {"entries", std::move(entries)}}
      .dump(2);
}

// ---------------------------------------------------------------------------

namespace {

struct AuditKernel {
  KernelSpec spec;
  std::string params;
  std::size_t dim;
};

std::vector<AuditKernel> audit_zoo() {
  return {
      {CosineKernel{}, "", 5},
      {NsdKernel{}, "", 5},
      {make_neg_dist_alpha(1.0), "alpha=1", 5},
      {PoincareKernel{}, "", 5},
      {make_wasserstein1d(1), "q=1", 1},
      {make_wasserstein1d(2), "q=2", 1},
      {NegJeffreysKernel{}, "", 2},
      // Points spread over [-2,2]^5 rarely fall within each other's unit
      // support, so the search runs in the plane.
      {EpanechnikovKernel{}, "", 2},
  };
}

constexpr std::size_t kSearchTrials = 20;

}  // namespace

AuditReport audit_kernels(std::size_t n, std::uint64_t seed, double tol) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "audit: n must be >= 2");
  AuditReport report;
  report.n = n;
  report.seed = seed;
  report.tol = tol;
  report.poincare_pd = poincare_pd_counterexample();
  report.jeffreys_cpd = jeffreys_cpd_counterexample();

  for (const AuditKernel& k : audit_zoo()) {
    AuditEntry e;
    e.kernel = k.spec.name();
    e.params = k.params;
    e.n = n;
    e.seed = derive_seed(seed, hash_key("audit/" + e.kernel + "/" + k.params));
    try {
      const PointSampler sampler = natural_sampler(k.spec, k.dim);
      Rng rng(e.seed);
      std::vector<KernelPoint> points;
      for (std::size_t i = 0; i < n; ++i) points.push_back(sampler(rng));
      const DefinitenessVerdict v = certify(gram(k.spec, std::move(points)), tol);
      e.min_eig = v.min_eig;
      e.centered_min_eig = v.centered_min_eig;
      e.pd = v.pd;
      e.cpd = v.cpd;
      Rng search_rng(derive_seed(e.seed, 1));
      e.counterexample = search_violation(k.spec, sampler, n, kSearchTrials, search_rng);
      if (!e.counterexample && std::holds_alternative<NegJeffreysKernel>(k.spec.variant()))
        e.counterexample = report.jeffreys_cpd;
      if (e.counterexample && e.counterexample->quadratic_form < 0.0) {
        e.cpd = false;
        e.pd = false;
      }
      if (std::holds_alternative<PoincareKernel>(k.spec.variant()) && report.poincare_pd.quadratic_form < 0.0)
        e.pd = false;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::vector<std::string> audit_mismatches(const AuditReport& report) {
  std::vector<std::string> bad;
  for (const auto& e : report.entries) {
    const std::string label = e.kernel + (e.params.empty() ? "" : "(" + e.params + ")");
    if (!e.error.empty()) {
      bad.push_back(label + ": " + e.error);
      continue;
    }
    bool want_pd = false;
    bool want_cpd = true;
    if (e.kernel == "cosine") want_pd = true;
    if (e.kernel == "neg-jeffreys" || e.kernel == "epanechnikov") want_cpd = false;
    if (e.pd != want_pd) bad.push_back(label + ": pd verdict " + (e.pd ? "true" : "false"));
    if (e.cpd != want_cpd) bad.push_back(label + ": cpd verdict " + (e.cpd ? "true" : "false"));
  }
  if (!(report.poincare_pd.quadratic_form < -1e-6)) bad.push_back("poincare PD counterexample is not negative");
  if (!(report.jeffreys_cpd.quadratic_form < -1e-6)) bad.push_back("jeffreys CPD counterexample is not negative");
  if (report.jeffreys_cpd.constraint_sum != 0.0) bad.push_back("jeffreys coefficients do not sum to zero");
  return bad;
}

std::string to_json(const AuditReport& r) {
  json kernels = json::array();
  for (const auto& e : r.entries) {
    json j{{"kernel", e.kernel}, {"n", e.n}, {"seed", e.seed}};
    if (!e.params.empty()) j["params"] = e.params;
    if (!e.error.empty()) {
      j["error"] = e.error;
    } else {
      j["min_eig"] = e.min_eig;
      j["centered_min_eig"] = e.centered_min_eig;
      j["pd"] = e.pd;
      j["cpd"] = e.cpd;
      if (e.counterexample) j["counterexample"] = record_to_json(*e.counterexample);
    }
    kernels.push_back(std::move(j));
  }
  return json{{"n", r.n},
              {"seed", r.seed},
              {"tol", r.tol},
              {"note", "pd/cpd are sample-based: true means no violation was found on the sampled points"},
              {"kernels", std::move(kernels)},
              {"poincare_pd_counterexample", record_to_json(r.poincare_pd)},
              {"jeffreys_cpd_counterexample", record_to_json(r.jeffreys_cpd)}}
      .dump(2);
}

// ---------------------------------------------------------------------------

SipsModel constant_offset_sips(const CsipsModel& c) {
  const std::size_t p = input_dim(c.f);
  if (std::holds_alternative<LookupTable>(c.f)) {
    return SipsModel{c.f, LookupTable{Matrix(p, 1, -0.5 * c.gamma)}};
  }
  // relu(0 * x + 1) = 1, scaled by -gamma / 2.
  MlpParams u;
  u.activation = Activation::ReLU;
  u.B = Matrix(1, p);
  u.c = {1.0};
  u.A = Matrix(1, 1, -0.5 * c.gamma);
  return SipsModel{c.f, std::move(u)};
}

ReduceCheckReport reduce_check(std::uint64_t seed, std::size_t pairs) {
  ReduceCheckReport report;
  report.pairs = pairs;
  Rng rng(derive_seed(seed, hash_key("reduce-check")));
  const std::size_t p = 5;

  ModelShape shape;
  shape.input_dim = p;
  shape.hidden = 10;
  shape.output_dim = 4;

  shape.head = Head::Csips;
  auto csips_model = std::get<CsipsModel>(make_model(shape, rng));
  csips_model.gamma = rng.uniform(0.0, 5.0);
  const SipsModel shifted = constant_offset_sips(csips_model);

  shape.head = Head::Sips;
  SipsModel sips_model = std::get<SipsModel>(make_model(shape, rng));
  // Non-zero biases so every path of the embedding is exercised.
  for (double& v : std::get<MlpParams>(sips_model.f).c) v = rng.uniform(-0.5, 0.5);
  for (double& v : std::get<MlpParams>(sips_model.u).c) v = rng.uniform(-0.5, 0.5);
  const MipsModel embedded = sips_to_mips(sips_model);

  for (std::size_t k = 0; k < pairs; ++k) {
    const Matrix xs = sample_uniform_box(rng, 2, p, 2.0);
    report.csips_vs_sips = std::max(report.csips_vs_sips,
                                    std::fabs(csips(csips_model, xs.row(0), xs.row(1)) - sips(shifted, xs.row(0), xs.row(1))));
    report.sips_vs_mips = std::max(report.sips_vs_mips,
                                   std::fabs(sips(sips_model, xs.row(0), xs.row(1)) - mips(embedded, xs.row(0), xs.row(1))));
  }

  const std::size_t nodes = 12;
  ModelShape lookup = shape;
  lookup.kind = FeatureKind::Lookup;
  lookup.input_dim = nodes;
  SipsModel table_sips = std::get<SipsModel>(make_model(lookup, rng));
  for (double& v : std::get<LookupTable>(table_sips.u).table.data()) v = rng.uniform(-2.0, 2.0);
  const MipsModel table_mips = sips_to_mips(table_sips);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = 0; j < nodes; ++j) {
      std::vector<double> a(nodes, 0.0), b(nodes, 0.0);
      a[i] = 1.0;
      b[j] = 1.0;
      report.sips_vs_mips_lookup =
          std::max(report.sips_vs_mips_lookup, std::fabs(sips(table_sips, a, b) - mips(table_mips, a, b)));
    }
  return report;
}

std::string to_json(const ReduceCheckReport& r) {
  return json{{"pairs", r.pairs},
              {"max_abs_csips_vs_sips", r.csips_vs_sips},
              {"max_abs_sips_vs_mips", r.sips_vs_mips},
              {"max_abs_sips_vs_mips_lookup", r.sips_vs_mips_lookup}}
      .dump(2);
}

}  // namespace cpdlab

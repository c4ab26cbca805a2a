#include "cpdlab/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cpdlab/sampling.hpp"

namespace cpdlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double pair_count(std::size_t n) { return static_cast<double>(n) * static_cast<double>(n - 1) / 2.0; }

void require_pairs(const Matrix& x, const PairValues& v, const char* what) {
  if (x.rows() < 2) throw Error(ErrorCode::InvalidArgument, std::string(what) + ": need at least two points");
  if (v.points() != x.rows()) throw Error(ErrorCode::DimMismatch, std::string(what) + ": pair values do not match inputs");
}

// Per-point features of every map a head uses.
struct HeadFeatures {
  BatchCache f;
  BatchCache second;  // u for SIPS, r- for MIPS
  double gamma = 0.0;
};

HeadFeatures forward_all(const SimilarityModel& m, const Matrix& x) {
  HeadFeatures h;
  std::visit(Overloaded{[&](const IpsModel& s) { h.f = feature_forward_batch(s.f, x); },
                        [&](const SipsModel& s) {
                          h.f = feature_forward_batch(s.f, x);
                          h.second = feature_forward_batch(s.u, x);
                        },
                        [&](const CsipsModel& s) {
                          h.f = feature_forward_batch(s.f, x);
                          h.gamma = s.gamma;
                        },
                        [&](const MipsModel& s) {
                          h.f = feature_forward_batch(s.f_plus, x);
                          h.second = feature_forward_batch(s.r_minus, x);
                        }},
             m);
  return h;
}

// Same operation order as `similarity`, so predictions agree bit for bit.
double head_value(Head head, const HeadFeatures& h, std::size_t i, std::size_t j) {
  const double inner = dot(h.f.out.row(i), h.f.out.row(j));
  switch (head) {
    case Head::Ips: return inner;
    case Head::Sips: return inner + (h.second.out(i, 0) + h.second.out(j, 0));
    case Head::Csips: return inner - h.gamma;
    case Head::Mips: return inner - dot(h.second.out.row(i), h.second.out.row(j));
  }
  return inner;
}

std::vector<double> l2_mask(const SimilarityModel& m, const L2Groups& groups) {
  const auto tags = parameter_tags(m);
  std::vector<double> mask(tags.size(), 0.0);
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const ParamTag t = tags[k];
    bool on = false;
    switch (t.group) {
      case ParamGroup::Weight: on = groups.weights; break;
      case ParamGroup::Bias: on = groups.biases; break;
      case ParamGroup::Gamma: on = groups.gamma; break;
    }
    if (t.offset_map && !groups.offset_maps) on = false;
    mask[k] = on ? 1.0 : 0.0;
  }
  return mask;
}

void add_penalty(const SimilarityModel& m, double l2, const L2Groups& groups, LossAndGrad& out) {
  if (l2 < 0.0) throw Error(ErrorCode::InvalidArgument, "l2 must be >= 0");
  const auto theta = flatten_parameters(m);
  const auto mask = l2_mask(m, groups);
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    sum_sq += mask[k] * theta[k] * theta[k];
    out.grads.values[k] += 2.0 * l2 * mask[k] * theta[k];
  }
  out.penalty = l2 * sum_sq;
  out.loss = out.data_loss + out.penalty;
}

// Loss per pair and its derivative in h.
struct PairLoss {
  double value;
  double slope;
};

template <class PairFn>
LossAndGrad batched_loss_and_grad(const SimilarityModel& m, const Matrix& x, PairFn&& pair_fn,
                                  double l2, const L2Groups& groups) {
  const std::size_t n = x.rows();
  const Head head = head_of(m);
  const HeadFeatures h = forward_all(m, x);
  const double inv_pairs = 1.0 / pair_count(n);

  // slope(i, j) = dL/dh_ij for the full objective; row sums for the loss.
  Matrix slope(n, n);
  std::vector<double> row_loss(n, 0.0);
  std::vector<double> row_slope(n, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double loss_sum = 0.0;
    double slope_sum = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const PairLoss pl = pair_fn(i, j, head_value(head, h, i, j));
      loss_sum += pl.value;
      const double s = pl.slope * inv_pairs;
      slope(i, j) = s;
      slope(j, i) = s;
      slope_sum += s;
    }
    row_loss[i] = loss_sum;
    row_slope[i] = slope_sum;
  }

  LossAndGrad out;
  out.grads.values.assign(parameter_count(m), 0.0);
  double total = 0.0;
  double total_slope = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += row_loss[i];
    total_slope += row_slope[i];
  }
  out.data_loss = total * inv_pairs;

  // upstream_i = sign * sum_j slope(i, j) * feat_j
  auto pull = [&](const Matrix& feat, double sign) {
    Matrix up(n, feat.cols());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      auto dst = up.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const double s = slope(i, j);
        if (s == 0.0) continue;
        const auto fj = feat.row(j);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += s * fj[k];
      }
      for (double& v : dst) v *= sign;
    }
    return up;
  };

  std::span<double> grad(out.grads.values);
  std::visit(Overloaded{[&](const IpsModel& s) { feature_backward_batch(s.f, x, h.f, pull(h.f.out, 1.0), grad); },
                        [&](const SipsModel& s) {
                          const std::size_t nf = parameter_count(s.f);
                          feature_backward_batch(s.f, x, h.f, pull(h.f.out, 1.0), grad.subspan(0, nf));
                          Matrix up(n, 1);
                          for (std::size_t i = 0; i < n; ++i) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < n; ++j) acc += slope(i, j);
                            up(i, 0) = acc;
                          }
                          feature_backward_batch(s.u, x, h.second, up, grad.subspan(nf));
                        },
                        [&](const CsipsModel& s) {
                          const std::size_t nf = parameter_count(s.f);
                          feature_backward_batch(s.f, x, h.f, pull(h.f.out, 1.0), grad.subspan(0, nf));
                          grad[nf] = -total_slope;
                        },
                        [&](const MipsModel& s) {
                          const std::size_t nf = parameter_count(s.f_plus);
                          feature_backward_batch(s.f_plus, x, h.f, pull(h.f.out, 1.0), grad.subspan(0, nf));
                          feature_backward_batch(s.r_minus, x, h.second, pull(h.second.out, -1.0),
                                                 grad.subspan(nf));
                        }},
             m);

  add_penalty(m, l2, groups, out);
  return out;
}

template <class PairFn>
LossAndGrad reference_loss_and_grad(const SimilarityModel& m, const Matrix& x, PairFn&& pair_fn,
                                    double l2, const L2Groups& groups) {
  const std::size_t n = x.rows();
  const double inv_pairs = 1.0 / pair_count(n);
  LossAndGrad out;
  out.grads.values.assign(parameter_count(m), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const PairLoss pl = pair_fn(i, j, similarity(m, x.row(i), x.row(j)));
      total += pl.value;
      const Gradients g = pair_gradient(m, x.row(i), x.row(j), pl.slope * inv_pairs);
      for (std::size_t k = 0; k < g.values.size(); ++k) out.grads.values[k] += g.values[k];
    }
  out.data_loss = total * inv_pairs;
  add_penalty(m, l2, groups, out);
  return out;
}

auto mse_pair(const PairValues& h_star) {
  return [&h_star](std::size_t i, std::size_t j, double h) {
    const double e = h - h_star(i, j);
    return PairLoss{e * e, 2.0 * e};
  };
}

void require_binary(const PairValues& w) {
  for (double v : w.values())
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::NonBinaryWeight, "logistic loss: weights must be 0 or 1");
}

auto logistic_pair(const PairValues& w) {
  return [&w](std::size_t i, std::size_t j, double h) {
    const double wij = w(i, j);
    return PairLoss{softplus(h) - wij * h, sigmoid(h) - wij};
  };
}

}  // namespace

// ---------------------------------------------------------------------------

PairValues::PairValues(std::size_t n, double fill)
    : n_(n), values_(n < 2 ? 0 : n * (n - 1) / 2, fill) {}

DatasetSpec default_dataset_spec(const KernelSpec& kernel, std::uint64_t seed) {
  DatasetSpec spec;
  spec.kernel = kernel;
  spec.seed = seed;
  if (std::holds_alternative<PoincareKernel>(kernel.variant())) {
    spec.fstar = FeatureTransform::Identity;
    spec.input_law = InputLaw::BetaBall;
  }
  return spec;
}

PairValues true_pair_values(const GroundTruthSpec& truth, const Matrix& x) {
  const std::size_t n = x.rows();
  std::vector<KernelPoint> feats(n);
  for (std::size_t i = 0; i < n; ++i) feats[i] = Euclidean{apply_fstar(truth.fstar, x.row(i))};
  PairValues h(n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      for (std::size_t j = i + 1; j < n; ++j) h.values()[PairValues::index(i, j, n)] = truth.kernel(feats[i], feats[j]);
    } catch (...) {
#pragma omp critical(cpdlab_pairs_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return h;
}

Dataset synth_dataset(const DatasetSpec& spec) {
  if (spec.n_train < 2 || spec.n_test < 2) throw Error(ErrorCode::InvalidArgument, "dataset: need at least two points per split");
  Dataset d;
  d.truth = GroundTruthSpec{spec.fstar, spec.kernel};
  validate(d.truth);
  if (spec.fstar == FeatureTransform::PaperMap4D && spec.p < 5)
    throw Error(ErrorCode::DimTooSmall, "dataset: the 4-d ground-truth map needs p >= 5");
  auto draw = [&](std::uint64_t stream, std::size_t n) {
    Rng rng(derive_seed(spec.seed, stream));
    return spec.input_law == InputLaw::BetaBall ? sample_ball_beta(rng, n, spec.p)
                                                : sample_uniform_box(rng, n, spec.p, spec.half_width);
  };
  d.train.x = draw(kTrainStream, spec.n_train);
  d.test.x = draw(kTestStream, spec.n_test);
  d.train.h_star = true_pair_values(d.truth, d.train.x);
  d.test.h_star = true_pair_values(d.truth, d.test.x);
  return d;
}

// ---------------------------------------------------------------------------

LossAndGrad mse_loss_and_grad(const SimilarityModel& m, const Matrix& x, const PairValues& h_star, double l2,
                              const L2Groups& groups) {
  require_pairs(x, h_star, "mse_loss");
  return batched_loss_and_grad(m, x, mse_pair(h_star), l2, groups);
}

LossAndGrad logistic_loss_and_grad(const SimilarityModel& m, const Matrix& x, const PairValues& w, double l2,
                                   const L2Groups& groups) {
  require_pairs(x, w, "logistic_loss");
  require_binary(w);
  return batched_loss_and_grad(m, x, logistic_pair(w), l2, groups);
}

LossAndGrad mse_loss_and_grad_reference(const SimilarityModel& m, const Matrix& x, const PairValues& h_star,
                                        double l2, const L2Groups& groups) {
  require_pairs(x, h_star, "mse_loss");
  return reference_loss_and_grad(m, x, mse_pair(h_star), l2, groups);
}

LossAndGrad logistic_loss_and_grad_reference(const SimilarityModel& m, const Matrix& x, const PairValues& w,
                                             double l2, const L2Groups& groups) {
  require_pairs(x, w, "logistic_loss");
  require_binary(w);
  return reference_loss_and_grad(m, x, logistic_pair(w), l2, groups);
}

PairValues predict_pairs(const SimilarityModel& m, const Matrix& x) {
  const std::size_t n = x.rows();
  const Head head = head_of(m);
  const HeadFeatures h = forward_all(m, x);
  PairValues out(n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = i + 1; j < n; ++j) out.values()[PairValues::index(i, j, n)] = head_value(head, h, i, j);
  }
  return out;
}

double mspe(const SimilarityModel& m, const Matrix& x, const PairValues& h_star) {
  require_pairs(x, h_star, "mspe");
  const std::size_t n = x.rows();
  const Head head = head_of(m);
  const HeadFeatures h = forward_all(m, x);
  std::vector<double> row_sum(n, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double e = h_star(i, j) - head_value(head, h, i, j);
      s += e * e;
    }
    row_sum[i] = s;
  }
  double total = 0.0;
  for (double s : row_sum) total += s;
  return total / pair_count(n);
}

// ---------------------------------------------------------------------------

double lr_schedule(std::size_t iter, double lr0, const LrSchedule& schedule) {
  if (schedule.mode == LrSchedule::Mode::PaperLiteral)
    return lr0 * std::pow(0.1, static_cast<double>(iter / 100));
  if (schedule.period == 0) throw Error(ErrorCode::InvalidArgument, "lr_schedule: period must be >= 1");
  const double lr = lr0 * std::pow(schedule.gamma_step, static_cast<double>(iter / schedule.period));
  return std::max(schedule.lr_min, lr);
}

TrainReport gd_train(SimilarityModel& m, const Dataset& dataset, const TrainConfig& config) {
  if (!(config.lr0 > 0.0)) throw Error(ErrorCode::ConfigInvalid, "train: lr0 must be > 0");
  if (config.l2 < 0.0) throw Error(ErrorCode::ConfigInvalid, "train: l2 must be >= 0");
  validate(m);
  if (config.loss == LossKind::Logistic && !dataset.train.weights)
    throw Error(ErrorCode::ConfigInvalid, "train: logistic loss needs sampled graph weights");

  const auto start = std::chrono::steady_clock::now();
  auto objective = [&]() {
    if (config.loss == LossKind::Mse)
      return mse_loss_and_grad(m, dataset.train.x, dataset.train.h_star, config.l2, config.l2_groups);
    return logistic_loss_and_grad(m, dataset.train.x, *dataset.train.weights, config.l2, config.l2_groups);
  };

  TrainReport report;
  auto finish = [&]() {
    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (const auto* c = std::get_if<CsipsModel>(&m)) report.gamma = c->gamma;
  };

  std::vector<double> theta = flatten_parameters(m);
  for (std::size_t t = 0; t <= config.iterations; ++t) {
    const LossAndGrad lg = objective();
    if (!std::isfinite(lg.loss) || !all_finite(lg.grads.values)) {
      report.iterations_run = t;
      finish();
      throw DivergenceError("train: objective became non-finite at iteration " + std::to_string(t), report);
    }
    if (t == 0) report.initial_train_loss = lg.loss;
    if (t % kTraceEvery == 0) report.loss_trace.push_back(lg.loss);
    if (t == config.iterations) {
      report.final_train_loss = lg.loss;
      report.final_data_loss = lg.data_loss;
      break;
    }
    const double lr = lr_schedule(t, config.lr0, config.schedule);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * lg.grads.values[k];
    assign_parameters(m, theta);
  }
  report.iterations_run = config.iterations;
  report.mspe_test = mspe(m, dataset.test.x, dataset.test.h_star);
  finish();
  return report;
}

// ---------------------------------------------------------------------------

PairValues sample_graph(const PairValues& h, GraphMode mode, Rng& rng) {
  PairValues w(h.points());
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double v = h.values()[k];
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "sample_graph: non-finite similarity");
    if (mode == GraphMode::Bernoulli) {
      w.values()[k] = rng.uniform() < sigmoid(v) ? 1.0 : 0.0;
    } else {
      const double rate = std::exp(v);
      if (rate > 1e9) throw Error(ErrorCode::OverflowGuard, "sample_graph: exp(h) exceeds 1e9");
      w.values()[k] = static_cast<double>(rng.poisson(rate));
    }
  }
  return w;
}

PairValues sample_graph(const SimilarityModel& m, const Matrix& x, GraphMode mode, Rng& rng) {
  return sample_graph(predict_pairs(m, x), mode, rng);
}

void attach_graph(Dataset& dataset, GraphMode mode, Rng& rng) {
  dataset.train.weights = sample_graph(dataset.train.h_star, mode, rng);
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void export_dataset_csv(const Dataset& dataset, const std::string& inputs_path, const std::string& pairs_path) {
  std::ofstream inputs(inputs_path);
  std::ofstream pairs(pairs_path);
  if (!inputs || !pairs) throw Error(ErrorCode::InvalidArgument, "export: cannot open output files");
  const std::size_t p = dataset.train.x.cols();
  inputs << "split,index";
  for (std::size_t j = 0; j < p; ++j) inputs << ",x" << (j + 1);
  inputs << '\n';
  pairs << "split,i,j,h_star\n";
  auto dump = [&](const char* name, const Split& s) {
    for (std::size_t i = 0; i < s.x.rows(); ++i) {
      inputs << name << ',' << i;
      for (double v : s.x.row(i)) inputs << ',' << format_double(v);
      inputs << '\n';
    }
    const std::size_t n = s.x.rows();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs << name << ',' << i << ',' << j << ',' << format_double(s.h_star(i, j)) << '\n';
  };
  dump("train", dataset.train);
  dump("test", dataset.test);
}

Dataset import_dataset_csv(const std::string& inputs_path, const std::string& pairs_path) {
  std::ifstream inputs(inputs_path);
  std::ifstream pairs(pairs_path);
  if (!inputs || !pairs) throw Error(ErrorCode::InvalidArgument, "import: cannot open input files");
  std::string line;
  std::getline(inputs, line);
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "split" || header[1] != "index")
    throw Error(ErrorCode::SchemaError, "import: unexpected inputs header");
  const std::size_t p = header.size() - 2;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  while (std::getline(inputs, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != p + 2) throw Error(ErrorCode::SchemaError, "import: ragged inputs row");
    auto& split = rows[cells[0]];
    if (std::stoul(cells[1]) != split.size()) throw Error(ErrorCode::SchemaError, "import: inputs out of order");
    std::vector<double> x(p);
    for (std::size_t j = 0; j < p; ++j) x[j] = std::stod(cells[j + 2]);
    split.push_back(std::move(x));
  }
  Dataset d;
  auto fill = [&](const char* name, Split& s) {
    const auto& r = rows[name];
    if (r.size() < 2) throw Error(ErrorCode::SchemaError, std::string("import: split '") + name + "' has fewer than two rows");
    s.x = Matrix(r.size(), p);
    for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), s.x.row(i).begin());
    s.h_star = PairValues(r.size(), std::nan(""));
  };
  fill("train", d.train);
  fill("test", d.test);
  std::getline(pairs, line);
  if (line != "split,i,j,h_star") throw Error(ErrorCode::SchemaError, "import: unexpected pairs header");
  while (std::getline(pairs, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw Error(ErrorCode::SchemaError, "import: ragged pairs row");
    Split& s = cells[0] == "train" ? d.train : d.test;
    const std::size_t i = std::stoul(cells[1]);
    const std::size_t j = std::stoul(cells[2]);
    if (!(i < j && j < s.x.rows())) throw Error(ErrorCode::SchemaError, "import: pair index out of range");
    s.h_star.at(i, j) = std::stod(cells[3]);
  }
  for (const Split* s : {&d.train, &d.test})
    if (!all_finite(s->h_star.values())) throw Error(ErrorCode::SchemaError, "import: missing pair values");
  return d;
}

}  // namespace cpdlab

#include <cmath>
#include <filesystem>

#include "cpdlab/error.hpp"
#include "cpdlab/training.hpp"
#include "doctest.h"
#include "support.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cpdlab;
using namespace cpdlab::testing;

namespace {

Matrix inputs_for(const GradCase& c, std::size_t n, Rng& r) {
  const std::size_t p = c.x.size();
  Matrix x(n, p);
  const bool lookup = std::count(c.x.begin(), c.x.end(), 1.0) == 1 && std::count(c.x.begin(), c.x.end(), 0.0) == p - 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) x(i, k) = lookup ? (k == i % p ? 1.0 : 0.0) : r.uniform(-2, 2);
  return x;
}

PairValues random_targets(std::size_t n, Rng& r, bool binary) {
  PairValues h(n);
  for (double& v : h.values()) v = binary ? static_cast<double>(r.uniform() < 0.5) : r.uniform(-3, 3);
  return h;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

}  // namespace

TEST_CASE("pair indexing") {
  PairValues v(5);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(PairValues::index(i, j, 5) == expected++);
  CHECK(v.size() == 10);
  v.at(3, 1) = 2.5;
  CHECK(v(1, 3) == 2.5);
}

TEST_CASE("synth_dataset: shapes, ranges and recomputable targets") {
  auto spec = default_dataset_spec(parse_kernel("cosine"), 3);
  spec.n_train = 40;
  spec.n_test = 30;
  const auto ds = synth_dataset(spec);
  CHECK(ds.train.x.rows() == 40);
  CHECK(ds.test.x.rows() == 30);
  CHECK(ds.train.h_star.size() == 40 * 39 / 2);
  CHECK(ds.test.h_star.size() == 30 * 29 / 2);
  for (double v : ds.train.h_star.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  for (double v : ds.train.x.data()) CHECK(std::abs(v) <= 2.0);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = i + 1; j < 40; ++j)
      CHECK(std::abs(ds.train.h_star(i, j) - true_similarity(ds.truth, ds.train.x.row(i), ds.train.x.row(j))) <= 1e-12);
  CHECK_FALSE(ds.train.x == ds.test.x);
  const auto again = synth_dataset(spec);
  CHECK(again.train.h_star.values() == ds.train.h_star.values());
}

TEST_CASE("synth_dataset: per-kernel defaults") {
  const auto nsd_spec = default_dataset_spec(parse_kernel("nsd"));
  CHECK(nsd_spec.p == 5);
  CHECK(nsd_spec.half_width == 2.0);
  CHECK(nsd_spec.input_law == InputLaw::UniformBox);
  CHECK(nsd_spec.fstar == FeatureTransform::PaperMap4D);
  auto ds = synth_dataset(nsd_spec);
  for (double v : ds.train.h_star.values()) CHECK(v <= 0.0);
  const auto poin = default_dataset_spec(parse_kernel("poincare"));
  CHECK(poin.input_law == InputLaw::BetaBall);
  CHECK(poin.fstar == FeatureTransform::Identity);
  auto bad = nsd_spec;
  bad.kernel = parse_kernel("poincare");
  CHECK_THROWS_AS(synth_dataset(bad), Error);
}

TEST_CASE("mse: batched equals per-pair reference and finite differences") {
  Rng r(1);
  for (Head h : {Head::Ips, Head::Sips, Head::Csips, Head::Mips})
    for (auto v : {MapVariant::MlpRelu, MapVariant::MlpSigmoid, MapVariant::Lookup}) {
      const auto c = random_grad_case(h, v, r);
      const auto x = inputs_for(c, 5, r);
      const auto target = random_targets(5, r, false);
      const auto fast = mse_loss_and_grad(c.model, x, target, 0.01);
      const auto ref = mse_loss_and_grad_reference(c.model, x, target, 0.01);
      INFO(to_string(h), " ", to_string(v));
      CHECK(std::abs(fast.loss - ref.loss) <= 1e-12 * (1 + std::abs(ref.loss)));
      CHECK(max_abs_diff(fast.grads.values, ref.grads.values) <= 1e-11);
      if (v == MapVariant::MlpRelu) continue;  // kinks across five inputs are not screened
      SimilarityModel work = c.model;
      const auto res = check_gradient(
          [&](std::span<const double> th) {
            assign_parameters(work, th);
            return mse_loss_and_grad(work, x, target, 0.01).loss;
          },
          flatten_parameters(c.model), fast.grads.values);
      CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("logistic: batched equals reference, finite differences, h = 0 gives log 2") {
  Rng r(2);
  for (Head h : {Head::Ips, Head::Sips, Head::Csips, Head::Mips})
    for (auto v : {MapVariant::MlpSigmoid, MapVariant::Lookup}) {
      const auto c = random_grad_case(h, v, r);
      const auto x = inputs_for(c, 5, r);
      const auto w = random_targets(5, r, true);
      const auto fast = logistic_loss_and_grad(c.model, x, w, 0.01);
      const auto ref = logistic_loss_and_grad_reference(c.model, x, w, 0.01);
      CHECK(std::abs(fast.loss - ref.loss) <= 1e-12 * (1 + std::abs(ref.loss)));
      CHECK(max_abs_diff(fast.grads.values, ref.grads.values) <= 1e-11);
      SimilarityModel work = c.model;
      const auto res = check_gradient(
          [&](std::span<const double> th) {
            assign_parameters(work, th);
            return logistic_loss_and_grad(work, x, w, 0.01).loss;
          },
          flatten_parameters(c.model), fast.grads.values);
      CHECK(res.max_rel_err < 1e-5);
    }
  // zero model
  IpsModel zero{LookupTable{Matrix(4, 2)}};
  Matrix x(4, 4);
  for (std::size_t i = 0; i < 4; ++i) x(i, i) = 1.0;
  const auto w = random_targets(4, r, true);
  CHECK(std::abs(logistic_loss_and_grad(zero, x, w, 0.0).loss - std::log(2.0)) < 1e-15);
  PairValues bad(4, 0.5);
  CHECK_THROWS_AS(logistic_loss_and_grad(zero, x, bad, 0.0), Error);
}

TEST_CASE("logistic: pushing h up lowers the loss when every w = 1") {
  CsipsModel m{LookupTable{Matrix(2, 1)}, 0.0};
  Matrix x{{1, 0}, {0, 1}};
  PairValues w(2, 1.0);
  double prev = HUGE_VAL;
  for (double g = 2.0; g >= -6.0; g -= 1.0) {
    m.gamma = g;  // h = -gamma
    const double loss = logistic_loss_and_grad(m, x, w, 0.0).loss;
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("l2 penalty adds exactly l2 * sum theta^2") {
  Rng r(3);
  const auto c = random_grad_case(Head::Sips, MapVariant::MlpTanh, r);
  const auto x = inputs_for(c, 6, r);
  const auto t = random_targets(6, r, false);
  const auto with = mse_loss_and_grad(c.model, x, t, 0.01);
  const auto without = mse_loss_and_grad(c.model, x, t, 0.0);
  double s2 = 0;
  for (double v : flatten_parameters(c.model)) s2 += v * v;
  CHECK(with.data_loss == without.loss);
  CHECK(std::abs(with.loss - without.loss - 0.01 * s2) <= 1e-15 * (1 + with.loss));
  L2Groups off;
  off.offset_maps = false;
  const auto partial = mse_loss_and_grad(c.model, x, t, 0.01, off);
  CHECK(partial.penalty < with.penalty);
}

TEST_CASE("loss gradient is a descent direction") {
  Rng r(4);
  for (Head h : {Head::Ips, Head::Sips, Head::Csips, Head::Mips})
    for (int trial = 0; trial < 20; ++trial) {
      const auto c = random_grad_case(h, trial % 2 ? MapVariant::MlpTanh : MapVariant::Lookup, r);
      const auto x = inputs_for(c, 5, r);
      for (bool logistic : {false, true}) {
        const auto t = random_targets(5, r, logistic);
        auto eval = [&](const SimilarityModel& m) {
          return logistic ? logistic_loss_and_grad(m, x, t, 0.01) : mse_loss_and_grad(m, x, t, 0.01);
        };
        const auto base = eval(c.model);
        const auto theta = flatten_parameters(c.model);
        double gnorm2 = 0;
        for (double g : base.grads.values) gnorm2 += g * g;
        if (gnorm2 == 0) continue;
        const double step = 1e-6 / std::sqrt(gnorm2);
        auto moved = theta;
        for (std::size_t k = 0; k < theta.size(); ++k) moved[k] -= step * base.grads.values[k];
        SimilarityModel m = c.model;
        assign_parameters(m, moved);
        CHECK(eval(m).loss < base.loss);
      }
    }
}

TEST_CASE("batched loss is independent of the thread count") {
#ifdef _OPENMP
  Rng r(5);
  const auto c = random_grad_case(Head::Sips, MapVariant::MlpTanh, r);
  const auto x = inputs_for(c, 40, r);
  const auto t = random_targets(40, r, false);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = mse_loss_and_grad(c.model, x, t, 0.01);
  omp_set_num_threads(4);
  const auto four = mse_loss_and_grad(c.model, x, t, 0.01);
  omp_set_num_threads(saved);
  CHECK(one.loss == four.loss);
  CHECK(one.grads.values == four.grads.values);
#endif
}

TEST_CASE("mspe") {
  Rng r(6);
  auto spec = default_dataset_spec(parse_kernel("cosine"), 1);
  spec.n_train = 10;
  spec.n_test = 20;
  const auto ds = synth_dataset(spec);
  const IpsModel zero{MlpParams{Matrix(2, 3), Matrix(3, 5), std::vector<double>(3), Activation::ReLU}};
  double mean_sq = 0;
  for (double v : ds.test.h_star.values()) mean_sq += v * v;
  mean_sq /= static_cast<double>(ds.test.h_star.size());
  CHECK(std::abs(mspe(zero, ds.test.x, ds.test.h_star) - mean_sq) < 1e-15);
  const auto perfect = predict_pairs(zero, ds.test.x);
  CHECK(mspe(zero, ds.test.x, perfect) == 0.0);
  ModelShape shape;
  const auto m = make_model(shape, r);
  const double a = mspe(m, ds.test.x, ds.test.h_star);
  CHECK(a >= 0.0);
  CHECK(mspe(m, ds.test.x, ds.test.h_star) == a);
}

TEST_CASE("lr_schedule") {
  LrSchedule lit;
  lit.mode = LrSchedule::Mode::PaperLiteral;
  CHECK(lr_schedule(0, 0.001, lit) == 0.001);
  CHECK(std::abs(lr_schedule(100, 0.001, lit) - 0.0001) < 1e-20);
  CHECK(std::abs(lr_schedule(10000, 0.001, lit) / 1e-103 - 1.0) < 1e-9);
  const LrSchedule step;
  CHECK(lr_schedule(0, 0.001, step) == 0.001);
  CHECK(lr_schedule(999, 0.001, step) == 0.001);
  CHECK(lr_schedule(1000, 0.001, step) == 0.0005);
  CHECK(lr_schedule(9999, 0.001, step) == 0.001 / 512);
  CHECK(lr_schedule(1000000, 0.001, step) == 1e-6);
}

TEST_CASE("gd_train: zero iterations report the initial model") {
  Rng r(7);
  auto spec = default_dataset_spec(parse_kernel("nsd"), 2);
  spec.n_train = 15;
  spec.n_test = 15;
  const auto ds = synth_dataset(spec);
  ModelShape shape;
  shape.hidden = 8;
  auto m = make_model(shape, r);
  const double before = mspe(m, ds.test.x, ds.test.h_star);
  TrainConfig cfg;
  cfg.iterations = 0;
  const auto rep = gd_train(m, ds, cfg);
  CHECK(rep.mspe_test == before);
  CHECK(rep.loss_trace.size() == 1);
}

TEST_CASE("gd_train: realizable lookup target is fit") {
  Rng r(8);
  // rank-2 target from a known table over 8 nodes
  const Matrix y{{1, 0.5}, {-0.5, 1}, {0.3, -0.8}, {1.2, 0.1}, {-1, -0.4}, {0.2, 0.9}, {0.7, -0.3}, {-0.6, 0.6}};
  Dataset ds;
  ds.train.x = Matrix::identity(8);
  ds.test.x = Matrix::identity(8);
  ds.train.h_star = PairValues(8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j) ds.train.h_star.at(i, j) = y(i, 0) * y(j, 0) + y(i, 1) * y(j, 1);
  ds.test.h_star = ds.train.h_star;
  ModelShape shape;
  shape.kind = FeatureKind::Lookup;
  shape.input_dim = 8;
  shape.output_dim = 2;
  auto m = make_model(shape, r);
  TrainConfig cfg;
  cfg.iterations = 20000;
  cfg.lr0 = 0.5;
  cfg.l2 = 0.0;
  cfg.schedule.period = 100000;
  const auto rep = gd_train(m, ds, cfg);
  CHECK(rep.final_data_loss < 1e-6);
  CHECK(rep.loss_trace.size() == 20000 / 100 + 1);
}

TEST_CASE("gd_train: deterministic and loss decreases") {
  auto spec = default_dataset_spec(parse_kernel("cosine"), 4);
  spec.n_train = 30;
  spec.n_test = 30;
  const auto ds = synth_dataset(spec);
  ModelShape shape;
  shape.head = Head::Sips;
  shape.hidden = 10;
  shape.output_dim = 3;
  TrainConfig cfg;
  cfg.iterations = 300;
  Rng r1(9), r2(9);
  auto m1 = make_model(shape, r1);
  auto m2 = make_model(shape, r2);
  const auto a = gd_train(m1, ds, cfg);
  const auto b = gd_train(m2, ds, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.mspe_test == b.mspe_test);
  CHECK(flatten_parameters(m1) == flatten_parameters(m2));
  CHECK(a.final_train_loss < a.initial_train_loss);
}

TEST_CASE("gd_train: divergence is reported") {
  auto spec = default_dataset_spec(parse_kernel("nsd"), 5);
  spec.n_train = 20;
  spec.n_test = 10;
  const auto ds = synth_dataset(spec);
  Rng r(10);
  ModelShape shape;
  shape.hidden = 20;
  auto m = make_model(shape, r);
  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.lr0 = 10.0;
  try {
    (void)gd_train(m, ds, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
    CHECK_FALSE(e.report().loss_trace.empty());
  }
}

TEST_CASE("sample_graph") {
  Rng r(11);
  PairValues h(3, -50.0);
  for (int t = 0; t < 100; ++t) {
    const auto w = sample_graph(h, GraphMode::Bernoulli, r);
    for (double v : w.values()) CHECK(v == 0.0);
  }
  PairValues zero(2, 0.0);
  double ones = 0;
  for (int t = 0; t < 100000; ++t) ones += sample_graph(zero, GraphMode::Bernoulli, r).values()[0];
  CHECK(std::abs(ones / 100000 - 0.5) < 0.01 * 0.5);
  PairValues big(2, 25.0);
  CHECK_THROWS_AS(sample_graph(big, GraphMode::Poisson, r), Error);
  PairValues modest(2, std::log(3.0));
  double sum = 0;
  for (int t = 0; t < 20000; ++t) sum += sample_graph(modest, GraphMode::Poisson, r).values()[0];
  CHECK(std::abs(sum / 20000 - 3.0) < 0.05);
}

TEST_CASE("dataset CSV round-trip") {
  auto spec = default_dataset_spec(parse_kernel("nsd"), 6);
  spec.n_train = 12;
  spec.n_test = 9;
  const auto ds = synth_dataset(spec);
  const auto dir = std::filesystem::temp_directory_path();
  const auto in = (dir / "cpdlab_inputs.csv").string(), pairs = (dir / "cpdlab_pairs.csv").string();
  export_dataset_csv(ds, in, pairs);
  const auto back = import_dataset_csv(in, pairs);
  CHECK(back.train.x == ds.train.x);
  CHECK(back.test.x == ds.test.x);
  CHECK(back.train.h_star.values() == ds.train.h_star.values());
  CHECK(back.test.h_star.values() == ds.test.h_star.values());
  std::filesystem::remove(in);
  std::filesystem::remove(pairs);
}

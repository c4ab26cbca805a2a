// Serial reference vs OpenMP paths: Gram construction and the batched MSE
// gradient against its per-pair reference.

#include <benchmark/benchmark.h>

#include "cpdlab/definiteness.hpp"
#include "cpdlab/training.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cpdlab;

namespace {

std::vector<KernelPoint> points_for(const KernelSpec& k, std::size_t n) {
  Rng rng(1);
  const auto sampler = natural_sampler(k);
  std::vector<KernelPoint> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(sampler(rng));
  return pts;
}

void set_threads(const benchmark::State& state, int arg) {
#ifdef _OPENMP
  omp_set_num_threads(state.range(arg) > 0 ? static_cast<int>(state.range(arg)) : omp_get_num_procs());
#else
  (void)state;
  (void)arg;
#endif
}

void BM_GramSerial(benchmark::State& state) {
  const auto k = parse_kernel("poincare");
  const auto pts = points_for(k, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gram_serial(k, pts));
}

void BM_GramParallel(benchmark::State& state) {
  set_threads(state, 1);
  const auto k = parse_kernel("poincare");
  const auto pts = points_for(k, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gram(k, pts));
}

struct LossFixture {
  SimilarityModel model;
  Dataset data;
};

LossFixture loss_fixture(std::size_t n, std::size_t hidden) {
  auto spec = default_dataset_spec(parse_kernel("nsd"), 3);
  spec.n_train = n;
  spec.n_test = 2;
  Rng rng(4);
  ModelShape shape;
  shape.head = Head::Sips;
  shape.hidden = hidden;
  return {make_model(shape, rng), synth_dataset(spec)};
}

void BM_MseGradReference(benchmark::State& state) {
  const auto f = loss_fixture(static_cast<std::size_t>(state.range(0)), 100);
  for (auto _ : state)
    benchmark::DoNotOptimize(mse_loss_and_grad_reference(f.model, f.data.train.x, f.data.train.h_star, 0.01));
}

void BM_MseGradBatched(benchmark::State& state) {
  set_threads(state, 1);
  const auto f = loss_fixture(static_cast<std::size_t>(state.range(0)), 100);
  for (auto _ : state)
    benchmark::DoNotOptimize(mse_loss_and_grad(f.model, f.data.train.x, f.data.train.h_star, 0.01));
}

}  // namespace

// Second argument: OpenMP threads, 0 meaning every processor.
BENCHMARK(BM_GramSerial)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramParallel)->Args({100, 1})->Args({400, 1})->Args({100, 0})->Args({400, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MseGradReference)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MseGradBatched)->Args({50, 1})->Args({200, 1})->Args({50, 0})->Args({200, 0})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

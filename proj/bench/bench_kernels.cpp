// Serial reference vs OpenMP kernels on the shapes that dominate training
// (encoder projections) and embedding diagnostics (exact t-SNE).

#include <benchmark/benchmark.h>

#include <vector>

#include "mtb/kernels.hpp"
#include "mtb/rng.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  mtb::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mtb::kernels::GemmSpec spec{.m = n, .n = n, .k = n};
  auto a = random_vec(n * n, 1);
  auto b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(spec, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

template <auto Kernel, auto Gradient>
void BM_TsneStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mtb::kernels::TsneGradSpec spec{.n = n, .dims = 2};
  auto y = random_vec(n * 2, 3);
  std::vector<double> p(n * n, 1.0 / static_cast<double>(n * n));
  std::vector<double> num(n * n), grad(n * 2);
  for (auto _ : state) {
    const double z = Kernel(spec, y, num);
    Gradient(spec, p, num, z, y, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}

template <auto Affinities>
void BM_TsneAffinities(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto dist = random_vec(n * n, 4);
  for (auto& d : dist) d = d * d;
  std::vector<double> p(n * n), achieved(n);
  for (auto _ : state) {
    Affinities(n, dist, 30.0, 1e-5, p, achieved);
    benchmark::DoNotOptimize(p.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<mtb::kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<mtb::kernels::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_TsneStep<mtb::kernels::serial::tsne_kernel, mtb::kernels::serial::tsne_gradient>)
    ->Name("tsne_step/serial")->Arg(500)->Arg(2000);
BENCHMARK(BM_TsneStep<mtb::kernels::omp::tsne_kernel, mtb::kernels::omp::tsne_gradient>)
    ->Name("tsne_step/omp")->Arg(500)->Arg(2000);
BENCHMARK(BM_TsneAffinities<mtb::kernels::serial::tsne_affinities>)->Name("tsne_affinities/serial")->Arg(500);
BENCHMARK(BM_TsneAffinities<mtb::kernels::omp::tsne_affinities>)->Name("tsne_affinities/omp")->Arg(500);

BENCHMARK_MAIN();

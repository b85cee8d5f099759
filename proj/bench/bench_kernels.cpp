#include <benchmark/benchmark.h>

#include "fairpg/independence.hpp"
#include "fairpg/kernels.hpp"
#include "fairpg/rng.hpp"

namespace k = fairpg::kernels;
using fairpg::Matrix;

namespace {

Matrix filled(std::size_t r, std::size_t c, std::uint64_t seed) {
  fairpg::SeededRng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

template <bool Parallel>
void BM_Affine(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix x = filled(n, 64, 1), w = filled(64, 64, 2);
  const std::vector<double> b(64, 0.1);
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? k::affine(x, w, b) : k::serial::affine(x, w, b));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_PairwiseSqDists(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix a = filled(n, 64, 3);
  for (auto _ : st)
    benchmark::DoNotOptimize(Parallel ? k::pairwise_sq_dists(a, a) : k::serial::pairwise_sq_dists(a, a));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n * n));
}

template <bool Parallel>
void BM_PairGradient(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix a = filled(n, 64, 4), c = filled(n, n, 5);
  Matrix grad(n, 64);
  for (auto _ : st) {
    if (Parallel)
      k::accumulate_pair_gradient(c, a, a, 1.0, grad);
    else
      k::serial::accumulate_pair_gradient(c, a, a, 1.0, grad);
    benchmark::ClobberMemory();
  }
}

void BM_HsicWithGrad(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix f = filled(n, 64, 6);
  std::vector<int> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<int>(i % 2);
  Matrix grad(n, 64);
  for (auto _ : st) benchmark::DoNotOptimize(fairpg::hsic_with_grad(f, g, grad));
}

}  // namespace

BENCHMARK(BM_Affine<false>)->Arg(128)->Arg(1024);
BENCHMARK(BM_Affine<true>)->Arg(128)->Arg(1024);
BENCHMARK(BM_PairwiseSqDists<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_PairwiseSqDists<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_PairGradient<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_PairGradient<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_HsicWithGrad)->Arg(128)->Arg(256);

BENCHMARK_MAIN();

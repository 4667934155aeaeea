#include <benchmark/benchmark.h>

#include <vector>

#include "splab/kernels.hpp"
#include "splab/rng.hpp"

namespace ks = splab::kernels;

namespace {

struct GemmArgs {
  std::vector<float> a, b, c;
  int m, k, n;
  GemmArgs(int m_, int k_, int n_) : m(m_), k(k_), n(n_) {
    splab::Rng rng(1234);
    a.resize(static_cast<size_t>(m) * k);
    b.resize(static_cast<size_t>(k) * n);
    c.resize(static_cast<size_t>(m) * n);
    for (auto& x : a) x = static_cast<float>(rng.uniform(-1, 1));
    for (auto& x : b) x = static_cast<float>(rng.uniform(-1, 1));
  }
};

void bm_gemm_nn_serial(benchmark::State& state) {
  GemmArgs g(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
             static_cast<int>(state.range(2)));
  for (auto _ : state) {
    ks::gemm_nn_serial(g.a.data(), g.b.data(), g.c.data(), g.m, g.k, g.n);
    benchmark::DoNotOptimize(g.c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2ll * g.m * g.k * g.n);
}

void bm_gemm_nn_omp(benchmark::State& state) {
  GemmArgs g(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
             static_cast<int>(state.range(2)));
  for (auto _ : state) {
    ks::gemm_nn(g.a.data(), g.b.data(), g.c.data(), g.m, g.k, g.n);
    benchmark::DoNotOptimize(g.c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2ll * g.m * g.k * g.n);
}

void bm_gemm_nt_serial(benchmark::State& state) {
  GemmArgs g(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
             static_cast<int>(state.range(2)));
  for (auto _ : state) {
    ks::gemm_nt_serial(g.a.data(), g.b.data(), g.c.data(), g.m, g.k, g.n);
    benchmark::DoNotOptimize(g.c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2ll * g.m * g.k * g.n);
}

void bm_gemm_nt_omp(benchmark::State& state) {
  GemmArgs g(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
             static_cast<int>(state.range(2)));
  for (auto _ : state) {
    ks::gemm_nt(g.a.data(), g.b.data(), g.c.data(), g.m, g.k, g.n);
    benchmark::DoNotOptimize(g.c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2ll * g.m * g.k * g.n);
}

void bm_sum_serial(benchmark::State& state) {
  splab::Rng rng(5);
  std::vector<float> x(static_cast<size_t>(state.range(0)));
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    double s = ks::sum_serial(x.data(), x.size());
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_sum_omp(benchmark::State& state) {
  splab::Rng rng(5);
  std::vector<float> x(static_cast<size_t>(state.range(0)));
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    double s = ks::sum(x.data(), x.size());
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

// SAE-training shaped problems: activations x encoder/decoder.
BENCHMARK(bm_gemm_nt_serial)->Args({256, 64, 512})->Args({256, 512, 64});
BENCHMARK(bm_gemm_nt_omp)->Args({256, 64, 512})->Args({256, 512, 64});
// Host-block shaped problems.
BENCHMARK(bm_gemm_nn_serial)->Args({128, 64, 64})->Args({128, 64, 256})->Args({128, 64, 96});
BENCHMARK(bm_gemm_nn_omp)->Args({128, 64, 64})->Args({128, 64, 256})->Args({128, 64, 96});
BENCHMARK(bm_sum_serial)->Arg(1 << 20);
BENCHMARK(bm_sum_omp)->Arg(1 << 20);

BENCHMARK_MAIN();

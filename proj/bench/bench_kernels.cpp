// Serial reference kernels against the OpenMP ones, plus one denoiser forward.
// Thread count follows OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <vector>

#include "dsf/denoiser.hpp"
#include "dsf/kernels.hpp"
#include "dsf/scene_gen.hpp"

using namespace dsf;

namespace {

std::vector<Real> filled(std::size_t n, std::uint64_t seed) {
  RngStream r(seed);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(r.uniform(-1, 1));
  return v;
}

template <auto Fn>
void BM_matmul(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const kernels::Gemm g{n, n, n};
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<Real> c(n * n);
  for (auto _ : state) {
    Fn(a, b, c, g, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <auto Fn>
void BM_matmul_nt(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const kernels::Gemm g{n, n, n};
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<Real> c(n * n);
  for (auto _ : state) {
    Fn(a, b, c, g, false);
    benchmark::DoNotOptimize(c.data());
  }
}

template <auto Fn>
void BM_softmax(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const auto x = filled(n * n, 3);
  std::vector<Real> y(n * n);
  for (auto _ : state) {
    Fn(x, y, n, n);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Fn>
void BM_sq_distances(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const auto a = filled(n * 3, 4), b = filled(n * 3, 5);
  std::vector<Real> out(n * n);
  for (auto _ : state) {
    Fn(a, b, out, n, n, 3);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_denoise_forward(benchmark::State& state) {
  DenoiserConfig cfg;
  cfg.feature_dim = 32;
  cfg.knn_k = 8;
  cfg.n_global_cross_layers = 1;
  ParamStore p = make_denoiser_params(cfg, 1);
  SceneGenConfig sc;
  sc.n1 = sc.n2 = state.range(0);
  RngStream r(1);
  const ScenePair pair = generate_scene(sc, r);
  const Array vt({sc.n1, 3});
  for (auto _ : state) {
    ad::Graph g(false);
    const auto y = denoise_forward(g, p, cfg, g.constant(vt), pair);
    benchmark::DoNotOptimize(y.v_pred.value().data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<kernels::ref::matmul>)->Name("matmul/ref")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<kernels::par::matmul>)->Name("matmul/par")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul_nt<kernels::ref::matmul_nt>)->Name("matmul_nt/ref")->Arg(256);
BENCHMARK(BM_matmul_nt<kernels::par::matmul_nt>)->Name("matmul_nt/par")->Arg(256);
BENCHMARK(BM_softmax<kernels::ref::softmax_rows>)->Name("softmax_rows/ref")->Arg(256)->Arg(1024);
BENCHMARK(BM_softmax<kernels::par::softmax_rows>)->Name("softmax_rows/par")->Arg(256)->Arg(1024);
BENCHMARK(BM_sq_distances<kernels::ref::sq_distances>)->Name("sq_distances/ref")->Arg(1024);
BENCHMARK(BM_sq_distances<kernels::par::sq_distances>)->Name("sq_distances/par")->Arg(1024);
BENCHMARK(BM_denoise_forward)->Name("denoise_forward/toy")->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

// Serial reference vs OpenMP fan-out for the two batch workloads: the
// differential fuzz campaign and a multi-seed benchmark sweep.
#include <benchmark/benchmark.h>

#include <numeric>

#include "lnic/bench.hpp"
#include "lnic/fuzz.hpp"

using namespace lnic;

static void BM_FuzzSerial(benchmark::State& state) {
  for (auto _ : state) {
    auto r = fuzz::run_batch_serial(1, static_cast<std::size_t>(state.range(0)));
    benchmark::DoNotOptimize(r.cases.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FuzzSerial)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_FuzzParallel(benchmark::State& state) {
  for (auto _ : state) {
    auto r = fuzz::run_batch_parallel(1, static_cast<std::size_t>(state.range(0)));
    benchmark::DoNotOptimize(r.cases.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FuzzParallel)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static std::vector<std::uint64_t> seeds(std::int64_t n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  std::iota(s.begin(), s.end(), 1);
  return s;
}

static bench::BenchSpec sweep_spec() {
  bench::BenchSpec spec;
  spec.workload = "kvclient";
  spec.backend = cp::Backend::kNic;
  spec.mode = bench::Mode::kPar56;
  spec.n = 500;
  return spec;
}

static void BM_SweepSerial(benchmark::State& state) {
  const auto s = seeds(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bench::seed_sweep(sweep_spec(), s, false));
}
BENCHMARK(BM_SweepSerial)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_SweepParallel(benchmark::State& state) {
  const auto s = seeds(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bench::seed_sweep(sweep_spec(), s, true));
}
BENCHMARK(BM_SweepParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

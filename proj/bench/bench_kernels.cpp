// Parallel kernels against their serial references on guidance-sized inputs.
// Run with --benchmark_counters_tabular=true to line the pairs up.

#include <benchmark/benchmark.h>

#include "sdr/kernels/kernels.hpp"
#include "sdr/rng.hpp"

using namespace sdr;

namespace {

Tensor<float> random(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(s);
  for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

template <bool Parallel>
void conv(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto x = random({32, n, n}, 1), w = random({32, 32, 3, 3}, 2), b = random({32}, 3);
  for (auto _ : st) {
    benchmark::DoNotOptimize(Parallel ? kernels::conv2d(x, w, b, 1, 1) : kernels::reference::conv2d(x, w, b, 1, 1));
  }
  st.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

template <bool Parallel>
void conv_t(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto x = random({32, n / 2, n / 2}, 1), w = random({32, 16, 3, 3}, 2), b = random({16}, 3);
  for (auto _ : st) {
    benchmark::DoNotOptimize(Parallel ? kernels::conv_transpose2d(x, w, b, 2, 1, 1)
                                      : kernels::reference::conv_transpose2d(x, w, b, 2, 1, 1));
  }
}

template <bool Parallel>
void attention(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0)), p = 13;
  const auto q = random({16, n, n}, 4), k = random({16, n, n}, 5), bias = random({p * p}, 6);
  for (auto _ : st) {
    benchmark::DoNotOptimize(Parallel ? kernels::window_attention(q, k, bias, p)
                                      : kernels::reference::window_attention(q, k, bias, p));
  }
}

template <bool Parallel>
void aggregate(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0)), p = 13;
  const auto a = kernels::window_attention(random({16, n, n}, 4), random({16, n, n}, 5), random({p * p}, 6), p);
  const auto field = random({n, n}, 7);
  for (auto _ : st) {
    benchmark::DoNotOptimize(Parallel ? kernels::window_aggregate(a, field, p)
                                      : kernels::reference::window_aggregate(a, field, p));
  }
}

}  // namespace

BENCHMARK(conv<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_t<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_t<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(attention<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(attention<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(aggregate<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(aggregate<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();

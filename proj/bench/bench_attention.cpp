#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "capeskit/attention/flops.hpp"
#include "capeskit/attention/kernels.hpp"
#include "capeskit/attention/reference.hpp"
#include "capeskit/attention/tokens.hpp"
#include "capeskit/fusion.hpp"
#include "capeskit/verify.hpp"

using namespace capeskit;
using namespace capeskit::attention;

namespace {

AttentionConfig sized(int length) {
  AttentionConfig base;
  base.num_domains = 2;
  base.num_layers = 1;
  return config_for_length(base, length);
}

TokenSequence tokens(const AttentionConfig& cfg, const ModelParams& p) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  const GridSpec s{cfg.nlat, cfg.nlon, 0.0, 1.0, 0.0, 1.0};
  ModelInputs in(static_cast<std::size_t>(cfg.num_domains));
  for (auto& d : in)
    for (int c = 0; c < cfg.channels; ++c) {
      std::vector<double> v(s.cells());
      for (double& x : v) x = n(rng);
      d.emplace_back(s, Units::unitless, std::move(v));
    }
  return tokenize(in, p, cfg);
}

// Args: sequence length, OpenMP threads.
void BM_Trilevel(benchmark::State& state) {
  const AttentionConfig cfg = sized(static_cast<int>(state.range(0)));
  omp_set_num_threads(static_cast<int>(state.range(1)));
  const ModelParams p = ModelParams::init(cfg, 1);
  const TokenSequence x = tokens(cfg, p);
  const auto& layer = p.layers.front();
  for (auto _ : state) {
    TokenSequence y = window_attention(x, layer.window, cfg);
    y = cross_variable_attention(y, layer.crossvar, cfg);
    y = anchor_attention(y, layer.anchor, cfg);
    benchmark::DoNotOptimize(y.tokens.data());
  }
  state.counters["flops"] = static_cast<double>(flop_count(cfg, static_cast<std::uint64_t>(cfg.seq_len())).trilevel());
  state.SetComplexityN(state.range(0));
}

// Serial reference: full-mask dense attention.
void BM_Dense(benchmark::State& state) {
  const AttentionConfig cfg = sized(static_cast<int>(state.range(0)));
  const ModelParams p = ModelParams::init(cfg, 1);
  const TokenSequence x = tokens(cfg, p);
  const AttentionMask mask = AttentionMask::full(cfg.seq_len());
  for (auto _ : state) {
    Matrix y = dense_attention_oracle(x.tokens, mask, p.layers.front().window, cfg.num_heads);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["flops"] = static_cast<double>(flop_count(cfg, static_cast<std::uint64_t>(cfg.seq_len())).dense);
  state.SetComplexityN(state.range(0));
}

void BM_PsBreakdown(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(1)));
  const int n = static_cast<int>(state.range(0));
  const GridSpec s{n, n, 0.0, 1.0, 0.0, 1.0};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-150.0, 150.0);
  std::vector<double> a(s.cells()), b(s.cells());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = u(rng), b[i] = u(rng);
  const AnomalyField fc(s, a), ob(s, b);
  for (auto _ : state) benchmark::DoNotOptimize(verify::ps_breakdown(fc, ob));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.cells()));
}

void thread_args(benchmark::internal::Benchmark* b, std::initializer_list<std::int64_t> sizes) {
  const int max = omp_get_max_threads();
  for (std::int64_t n : sizes)
    for (int t = 1; t <= max; t *= 2) b->Args({n, t});
}

}  // namespace

BENCHMARK(BM_Trilevel)->Apply([](auto* b) { thread_args(b, {256, 512, 1024, 2048}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense)->Arg(256)->Arg(512)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_PsBreakdown)->Apply([](auto* b) { thread_args(b, {256, 1024}); })->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <vector>

#include "apl/acquisition.hpp"
#include "apl/policy.hpp"

namespace {

std::vector<apl::TokenSequence> pool(std::size_t n) {
  std::vector<apl::TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    apl::TokenSequence s;
    for (std::size_t j = 0; j < 6; ++j) s.tokens.push_back(static_cast<apl::TokenId>(2 + (i * 7 + j * 3) % 14));
    out.push_back(std::move(s));
  }
  return out;
}

void BM_AcquireBatch(benchmark::State& state) {
  const auto cur = apl::init_params(apl::Architecture{}, 1), ref = apl::init_params(apl::Architecture{}, 2);
  const auto prompts = pool(1024);
  apl::AcquisitionConfig cfg;
  cfg.strategy = static_cast<apl::Strategy>(state.range(0));
  cfg.pool_size = 256;
  cfg.batch_size = 64;
  cfg.mc_samples = 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(apl::acquire_batch(cur, ref, prompts, cfg));
    ++cfg.seed;
  }
  state.SetLabel(std::string(apl::to_string(cfg.strategy)));
}
BENCHMARK(BM_AcquireBatch)
    ->Arg(static_cast<int>(apl::Strategy::Random))
    ->Arg(static_cast<int>(apl::Strategy::Entropy))
    ->Arg(static_cast<int>(apl::Strategy::Certainty))
    ->Arg(static_cast<int>(apl::Strategy::Hybrid))
    ->Unit(benchmark::kMillisecond);

void BM_PredictiveEntropy(benchmark::State& state) {
  const auto p = apl::init_params(apl::Architecture{}, 1);
  const auto x = pool(1).front();
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(apl::predictive_entropy(p, x, static_cast<std::size_t>(state.range(0)), 1.0, seed++));
}
BENCHMARK(BM_PredictiveEntropy)->Arg(8)->Arg(64);

}  // namespace

#include <benchmark/benchmark.h>

#include <vector>

#include "apl/dpo.hpp"
#include "apl/policy.hpp"

namespace {

apl::TokenSequence tokens(std::size_t n, apl::TokenId first, bool eos) {
  apl::TokenSequence s;
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(static_cast<apl::TokenId>(2 + (first + i) % 14));
  if (eos) {
    s.tokens.push_back(apl::kEos);
    s.terminated = true;
  }
  return s;
}

std::vector<apl::PreferencePair> batch(std::size_t n) {
  std::vector<apl::PreferencePair> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({tokens(6, static_cast<apl::TokenId>(i), false), tokens(7, static_cast<apl::TokenId>(i + 3), true),
                   tokens(5, static_cast<apl::TokenId>(i + 5), true), 1, {}, {}});
  return out;
}

void BM_Logprob(benchmark::State& state) {
  const auto p = apl::init_params(apl::Architecture{}, 1);
  const auto x = tokens(6, 0, false), y = tokens(static_cast<std::size_t>(state.range(0)), 4, true);
  for (auto _ : state) benchmark::DoNotOptimize(apl::logprob(p, x, y));
}
BENCHMARK(BM_Logprob)->Arg(4)->Arg(8)->Arg(16);

void BM_GradLogprob(benchmark::State& state) {
  const auto p = apl::init_params(apl::Architecture{}, 1);
  const auto x = tokens(6, 0, false), y = tokens(8, 4, true);
  for (auto _ : state) benchmark::DoNotOptimize(apl::grad_logprob(p, x, y));
}
BENCHMARK(BM_GradLogprob);

void BM_DpoGrad(benchmark::State& state) {
  const auto cur = apl::init_params(apl::Architecture{}, 1), ref = apl::init_params(apl::Architecture{}, 2);
  const auto b = batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(apl::dpo_grad(cur, ref, 0.2, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DpoGrad)->Arg(16)->Arg(64);

void BM_Sample(benchmark::State& state) {
  const auto p = apl::init_params(apl::Architecture{}, 1);
  const auto x = tokens(6, 0, false);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(apl::sample(p, x, {0.7, 8, seed++}));
}
BENCHMARK(BM_Sample);

}  // namespace

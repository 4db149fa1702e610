#pragma once

// Test-side oracles and fixtures. The reference model below re-implements the
// policy forward pass with plain loops so library results can be checked
// against an independent computation.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "apl/dpo.hpp"
#include "apl/policy.hpp"

namespace testing {

inline apl::Architecture tiny_arch() { return {8, 2, 4, 8}; }

inline apl::PolicyParams random_params(const apl::Architecture& arch, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(arch.parameter_count());
  for (auto& x : v) x = u(rng);
  return {arch, std::move(v)};
}

inline apl::PolicyParams zero_params(const apl::Architecture& arch) {
  return {arch, std::vector<double>(arch.parameter_count(), 0.0)};
}

/// Output bias offset computed from the documented layout, not from ParameterLayout.
inline std::size_t b_out_offset(const apl::Architecture& a) {
  const std::size_t V = a.vocab_size, k = a.context, d = a.embed, h = a.hidden;
  return V * d + h * k * d + h + V * h;
}

/// Model whose next-token distribution ignores context: softmax(bias).
inline apl::PolicyParams bias_only_params(const apl::Architecture& arch, const std::vector<double>& bias) {
  auto p = zero_params(arch);
  std::vector<double> v = p.values();
  for (std::size_t i = 0; i < bias.size(); ++i) v[b_out_offset(arch) + i] = bias[i];
  return {arch, std::move(v)};
}

/// Plain re-implementation of the next-token distribution.
inline std::vector<double> ref_next_probs(const apl::PolicyParams& p, const std::vector<apl::TokenId>& history) {
  const auto& a = p.arch();
  const std::size_t V = a.vocab_size, k = a.context, d = a.embed, h = a.hidden;
  const auto& w = p.values();
  const std::size_t emb0 = 0, wh0 = V * d, bh0 = wh0 + h * k * d, wo0 = bh0 + h, bo0 = wo0 + V * h;
  std::vector<apl::TokenId> ctx(k, apl::kBos);
  for (std::size_t j = 0; j < k; ++j) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(history.size()) - static_cast<std::ptrdiff_t>(k) +
                               static_cast<std::ptrdiff_t>(j);
    if (src >= 0) ctx[j] = history[static_cast<std::size_t>(src)];
  }
  std::vector<double> hid(h);
  for (std::size_t u = 0; u < h; ++u) {
    double s = w[bh0 + u];
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t e = 0; e < d; ++e) s += w[wh0 + u * k * d + j * d + e] * w[emb0 + ctx[j] * d + e];
    hid[u] = std::tanh(s);
  }
  std::vector<double> z(V);
  double mx = -1e300;
  for (std::size_t v = 0; v < V; ++v) {
    z[v] = w[bo0 + v];
    for (std::size_t u = 0; u < h; ++u) z[v] += w[wo0 + v * h + u] * hid[u];
    mx = std::max(mx, z[v]);
  }
  double tot = 0.0;
  for (auto& x : z) tot += (x = std::exp(x - mx));
  for (auto& x : z) x /= tot;
  return z;
}

/// Product of per-step probabilities, as a log.
inline double ref_logprob(const apl::PolicyParams& p, const apl::TokenSequence& prompt,
                          const apl::TokenSequence& completion) {
  std::vector<apl::TokenId> hist = prompt.tokens;
  double prob = 1.0;
  for (auto t : completion.tokens) {
    prob *= ref_next_probs(p, hist)[t];
    hist.push_back(t);
  }
  return std::log(prob);
}

/// Exact entropy of completions of at most `max_tokens` tokens (generation stops at EOS).
inline double exact_entropy(const apl::PolicyParams& p, const apl::TokenSequence& prompt, std::size_t max_tokens) {
  double h = 0.0;
  std::vector<apl::TokenId> suffix;
  auto rec = [&](auto&& self, double prob) -> void {
    std::vector<apl::TokenId> hist = prompt.tokens;
    hist.insert(hist.end(), suffix.begin(), suffix.end());
    const auto probs = ref_next_probs(p, hist);
    for (apl::TokenId t = 0; t < probs.size(); ++t) {
      const double q = prob * probs[t];
      if (q == 0.0) continue;
      if (t == apl::kEos || suffix.size() + 1 == max_tokens) {
        h -= q * std::log(q);
      } else {
        suffix.push_back(t);
        self(self, q);
        suffix.pop_back();
      }
    }
  };
  rec(rec, 1.0);
  return h;
}

inline apl::TokenSequence seq(std::vector<apl::TokenId> t, bool terminated = false) {
  return {std::move(t), terminated};
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("apl-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

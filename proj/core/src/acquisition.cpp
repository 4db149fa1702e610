#include "apl/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "apl/dpo.hpp"
#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Entropy: return "entropy";
    case Strategy::Certainty: return "certainty";
    case Strategy::Hybrid: return "hybrid";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "random") return Strategy::Random;
  if (name == "entropy") return Strategy::Entropy;
  if (name == "certainty") return Strategy::Certainty;
  if (name == "hybrid") return Strategy::Hybrid;
  throw InvalidInput("unknown strategy '" + std::string(name) + "'");
}

void AcquisitionConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch", "must be >= 1");
  if (pool_size < 1) throw ConfigError("pool", "must be >= 1");
  if (batch_size > pool_size) throw ConfigError("batch", "batch M exceeds pool S");
  if (oversample < 1) throw ConfigError("oversample", "must be >= 1");
  if (mc_samples < 1) throw ConfigError("mc_samples", "must be >= 1");
  if (!(gen_temperature >= 0.0)) throw ConfigError("gen_temperature", "must be >= 0");
  if (!(entropy_temperature >= 0.0)) throw ConfigError("entropy_temperature", "must be >= 0");
  if (max_tokens < 1) throw ConfigError("max_completion_tokens", "must be >= 1");
}

std::size_t AcquisitionConfig::prompts_drawn() const noexcept {
  switch (strategy) {
    case Strategy::Random: return batch_size;
    case Strategy::Entropy:
    case Strategy::Certainty: return pool_size;
    case Strategy::Hybrid: return oversample * pool_size;
  }
  return pool_size;
}

double predictive_entropy(const PolicyParams& params, const TokenSequence& prompt, std::size_t mc_samples,
                          double temperature, std::uint64_t seed, std::size_t max_tokens,
                          bool length_normalized) {
  if (mc_samples < 1) throw InvalidInput("mc_samples must be >= 1");
  double total = 0.0;
  for (std::size_t n = 0; n < mc_samples; ++n) {
    const SamplingConfig cfg{temperature, max_tokens, derive_seed(seed, "mc-sample", n)};
    const TokenSequence y = sample(params, prompt, cfg);
    double lp = logprob(params, prompt, y);
    if (length_normalized) lp /= static_cast<double>(y.size());
    total -= lp;
  }
  return total / static_cast<double>(mc_samples);
}

double preference_certainty(const PolicyParams& params, const PolicyParams& ref, double beta,
                            const TokenSequence& prompt, const TokenSequence& y1, const TokenSequence& y2,
                            bool length_normalized) {
  double r1 = implicit_reward(params, ref, beta, prompt, y1);
  double r2 = implicit_reward(params, ref, beta, prompt, y2);
  if (length_normalized) {
    r1 /= static_cast<double>(y1.size());
    r2 /= static_cast<double>(y2.size());
  }
  return std::abs(r1 - r2);
}

namespace {

// Partial Fisher-Yates: the first `count` entries of a seeded permutation of
// [0, n). Any shorter draw with the same seed is a prefix of a longer one.
std::vector<std::size_t> draw_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

void generate_pair(const PolicyParams& params, ScoredCandidate& c, const AcquisitionConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, "generation", c.prompt_index);
  c.y1 = sample(params, c.prompt, {cfg.gen_temperature, cfg.max_tokens, derive_seed(seed, "y", 0)});
  c.y2 = sample(params, c.prompt, {cfg.gen_temperature, cfg.max_tokens, derive_seed(seed, "y", 1)});
  for (std::size_t r = 0; r < cfg.max_regenerations && c.y1 == c.y2; ++r)
    c.y2 = sample(params, c.prompt, {cfg.gen_temperature, cfg.max_tokens, derive_seed(seed, "y", 2 + r)});
}

void score_entropy(const PolicyParams& params, ScoredCandidate& c, const AcquisitionConfig& cfg) {
  c.entropy = predictive_entropy(params, c.prompt, cfg.mc_samples, cfg.entropy_temperature,
                                 derive_seed(cfg.seed, "entropy-mc", c.prompt_index), cfg.max_tokens,
                                 cfg.length_normalized);
}

void score_certainty(const PolicyParams& params, const PolicyParams& ref, ScoredCandidate& c,
                     const AcquisitionConfig& cfg) {
  c.certainty = c.y1 == c.y2 ? 0.0
                             : preference_certainty(params, ref, cfg.beta, c.prompt, c.y1, c.y2,
                                                    cfg.length_normalized);
}

// Stable top-k by descending score, ties to the lower prompt index.
template <typename Score>
std::vector<ScoredCandidate> top_k(std::vector<ScoredCandidate> items, std::size_t k, Score score) {
  std::sort(items.begin(), items.end(), [&](const ScoredCandidate& a, const ScoredCandidate& b) {
    const double sa = score(a), sb = score(b);
    if (sa != sb) return sa > sb;
    return a.prompt_index < b.prompt_index;
  });
  items.resize(std::min(k, items.size()));
  return items;
}

}  // namespace

AcquisitionResult acquire_batch(const PolicyParams& params, const PolicyParams& ref,
                                std::span<const TokenSequence> prompt_pool, const AcquisitionConfig& cfg) {
  cfg.validate();
  if (!(params.arch() == ref.arch())) throw InvalidInput("policy and reference architectures differ");
  const std::size_t drawn = cfg.prompts_drawn();
  if (prompt_pool.size() < drawn)
    throw InvalidInput("prompt pool holds " + std::to_string(prompt_pool.size()) + " prompts, strategy " +
                       std::string(to_string(cfg.strategy)) + " needs " + std::to_string(drawn));

  AcquisitionResult result;
  for (std::size_t idx : draw_indices(prompt_pool.size(), drawn, derive_seed(cfg.seed, "pool"))) {
    ScoredCandidate c;
    c.prompt_index = idx;
    c.prompt = prompt_pool[idx];
    result.scored.push_back(std::move(c));
  }

  const auto by_entropy = [](const ScoredCandidate& c) { return *c.entropy; };
  const auto by_certainty = [](const ScoredCandidate& c) { return *c.certainty; };
  auto& scored = result.scored;

  switch (cfg.strategy) {
    case Strategy::Random:
      for (auto& c : scored) generate_pair(params, c, cfg);
      result.selected = scored;
      break;
    case Strategy::Entropy: {
      for (auto& c : scored) score_entropy(params, c, cfg);
      result.selected = top_k(scored, cfg.batch_size, by_entropy);
      for (auto& c : result.selected) generate_pair(params, c, cfg);
      break;
    }
    case Strategy::Certainty: {
      for (auto& c : scored) {
        generate_pair(params, c, cfg);
        score_certainty(params, ref, c, cfg);
      }
      result.selected = top_k(scored, cfg.batch_size, by_certainty);
      break;
    }
    case Strategy::Hybrid: {
      for (auto& c : scored) score_entropy(params, c, cfg);
      auto shortlist = top_k(scored, cfg.pool_size, by_entropy);
      std::unordered_set<std::size_t> kept;
      for (auto& c : shortlist) {
        generate_pair(params, c, cfg);
        score_certainty(params, ref, c, cfg);
        kept.insert(c.prompt_index);
      }
      // mirror the generated pairs back into the full scored list
      for (auto& c : scored) {
        if (!kept.count(c.prompt_index)) continue;
        const auto it = std::find_if(shortlist.begin(), shortlist.end(),
                                     [&](const ScoredCandidate& s) { return s.prompt_index == c.prompt_index; });
        c = *it;
      }
      result.selected = top_k(std::move(shortlist), cfg.batch_size, by_certainty);
      break;
    }
  }
  return result;
}

void write_scores_csv(const std::filesystem::path& path, const AcquisitionResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  std::unordered_set<std::size_t> selected;
  for (const auto& c : result.selected) selected.insert(c.prompt_index);
  out << "prompt_index,entropy,certainty,selected\n";
  out.precision(17);
  for (const auto& c : result.scored) {
    out << c.prompt_index << ',';
    if (c.entropy) out << *c.entropy;
    out << ',';
    if (c.certainty) out << *c.certainty;
    out << ',' << (selected.count(c.prompt_index) ? "true" : "false") << '\n';
  }
}

}  // namespace apl

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "apl/policy.hpp"

namespace apl {

enum class Strategy { Random, Entropy, Certainty, Hybrid };

std::string_view to_string(Strategy s) noexcept;
/// Accepts "random", "entropy", "certainty", "hybrid". Throws InvalidInput otherwise.
Strategy parse_strategy(std::string_view name);

struct AcquisitionConfig {
  Strategy strategy = Strategy::Random;
  std::size_t pool_size = 256;   ///< S: prompts scored per step
  std::size_t batch_size = 64;   ///< M: pairs kept per step
  std::size_t oversample = 4;    ///< J: hybrid draws J*S prompts before the entropy cut
  std::size_t mc_samples = 8;    ///< N: Monte-Carlo samples per entropy estimate
  double gen_temperature = 0.7;
  double entropy_temperature = 1.0;
  std::size_t max_tokens = 8;
  double beta = 0.2;
  bool length_normalized = false;
  std::size_t max_regenerations = 8;
  std::uint64_t seed = 0;

  void validate() const;
  /// Number of pool prompts drawn for this strategy.
  std::size_t prompts_drawn() const noexcept;
};

struct ScoredCandidate {
  std::size_t prompt_index = 0;  ///< index into the prompt pool
  TokenSequence prompt;
  TokenSequence y1;
  TokenSequence y2;
  std::optional<double> entropy;
  std::optional<double> certainty;
};

/// Monte-Carlo predictive entropy: -(1/N) sum_n log p(y_n | x), y_n sampled at
/// `temperature`. With length_normalized each term is divided by the completion length.
double predictive_entropy(const PolicyParams& params, const TokenSequence& prompt, std::size_t mc_samples,
                          double temperature, std::uint64_t seed, std::size_t max_tokens = 8,
                          bool length_normalized = false);

/// |r(x, y1) - r(x, y2)| under the implicit reward.
double preference_certainty(const PolicyParams& params, const PolicyParams& ref, double beta,
                            const TokenSequence& prompt, const TokenSequence& y1, const TokenSequence& y2,
                            bool length_normalized = false);

struct AcquisitionResult {
  std::vector<ScoredCandidate> selected;  ///< length M, sorted by descending score
  std::vector<ScoredCandidate> scored;    ///< every drawn candidate, in draw order
};

/// Draws prompts from the pool, scores them under cfg.strategy and keeps the top M.
/// Completion pairs always come from `params`. Ties go to the lower pool index.
AcquisitionResult acquire_batch(const PolicyParams& params, const PolicyParams& ref,
                                std::span<const TokenSequence> prompt_pool, const AcquisitionConfig& cfg);

/// CSV with header prompt_index,entropy,certainty,selected.
void write_scores_csv(const std::filesystem::path& path, const AcquisitionResult& result);

}  // namespace apl

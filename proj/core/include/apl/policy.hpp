#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "apl/vocabulary.hpp"

namespace apl {

/// Shape of the context-window MLP policy: the previous `context` tokens are
/// embedded (width `embed`), concatenated, passed through one tanh layer of
/// width `hidden`, then projected to logits over `vocab_size` tokens.
struct Architecture {
  std::uint32_t vocab_size = 16;
  std::uint32_t context = 4;
  std::uint32_t embed = 16;
  std::uint32_t hidden = 32;

  std::size_t parameter_count() const noexcept;
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Offsets of each parameter block inside the flat vector.
///   embedding  [V x d]       row per token
///   w_hidden   [h x k*d]     row-major
///   b_hidden   [h]
///   w_out      [V x h]       row-major
///   b_out      [V]
struct ParameterLayout {
  std::size_t embedding = 0;
  std::size_t w_hidden = 0;
  std::size_t b_hidden = 0;
  std::size_t w_out = 0;
  std::size_t b_out = 0;
  std::size_t total = 0;

  static ParameterLayout of(const Architecture& arch) noexcept;
};

/// Immutable flat parameter vector plus its architecture.
class PolicyParams {
 public:
  PolicyParams() = default;
  /// Throws InvalidInput when `values.size()` differs from the architecture's parameter count.
  PolicyParams(Architecture arch, std::vector<double> values);

  const Architecture& arch() const noexcept { return arch_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool all_finite() const noexcept;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  Architecture arch_{};
  std::vector<double> values_;
};

/// Seeded uniform(-0.08, 0.08) initialization.
PolicyParams init_params(const Architecture& arch, std::uint64_t seed);

struct SamplingConfig {
  double temperature = 1.0;  ///< 0 selects greedy decoding.
  std::size_t max_tokens = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sum of token log-probabilities of `completion` given `prompt`, including
/// the EOS emission when the completion ends with EOS.
double logprob(const PolicyParams& params, const TokenSequence& prompt,
               const TokenSequence& completion);

/// d logprob / d params, same length as params.values().
std::vector<double> grad_logprob(const PolicyParams& params, const TokenSequence& prompt,
                                 const TokenSequence& completion);

/// Ancestral sampling from softmax(logits / temperature) until EOS or max_tokens.
TokenSequence sample(const PolicyParams& params, const TokenSequence& prompt,
                     const SamplingConfig& cfg);

/// Next-token distribution after `context` (the full prefix: prompt followed
/// by any generated tokens).
std::vector<double> next_token_probs(const PolicyParams& params,
                                     std::span<const TokenId> context);

/// Forward pass over one (prompt, completion) pair that keeps the activations
/// needed to backpropagate a scaled log-probability into a gradient buffer.
class SequencePass {
 public:
  SequencePass(const PolicyParams& params, const TokenSequence& prompt,
               const TokenSequence& completion);

  double logprob() const noexcept { return logprob_; }

  /// grad += scale * d logprob / d params.
  void backward(double scale, std::span<double> grad) const;

 private:
  const PolicyParams* params_;
  std::size_t positions_ = 0;
  std::vector<TokenId> contexts_;   // positions x k
  std::vector<TokenId> targets_;    // positions
  std::vector<double> hidden_;      // positions x h (post-tanh)
  std::vector<double> probs_;       // positions x V
  double logprob_ = 0.0;
};

/// Mean per-sequence negative log-likelihood with an empty prompt.
double corpus_nll(const PolicyParams& params, std::span<const TokenSequence> corpus);

struct PretrainConfig {
  int epochs = 10;
  double lr = 1e-2;
  std::size_t minibatch = 32;
  std::uint64_t seed = 0;
};

/// Maximum-likelihood next-token training with Adam, starting from
/// init_params(arch, cfg.seed). Each corpus sequence is scored with an empty prompt.
PolicyParams pretrain(const Architecture& arch, std::span<const TokenSequence> corpus,
                      const PretrainConfig& cfg);

}  // namespace apl

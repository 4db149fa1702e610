#pragma once

#include <cstdint>
#include <vector>

#include "apl/oracle.hpp"
#include "apl/valence.hpp"
#include "apl/vocabulary.hpp"

namespace apl::synthetic {

/// <bos> <eos>, four neutral words, "and", five positive and four negative words.
Vocabulary valence_vocabulary();
ValenceTable valence_table(const Vocabulary& vocab);

/// Row-stochastic V x V transition matrix; row `a` is p(next | a). No row
/// emits <bos>. Weights are fixed by hand and jittered by `seed`.
using BigramTable = std::vector<std::vector<double>>;
BigramTable bigram_table(const Vocabulary& vocab, std::uint64_t seed, double jitter = 0.3);

/// Samples from <bos> until <eos> (kept as the last token) or `max_tokens` tokens.
TokenSequence sample_bigram(const BigramTable& table, Rng& rng, std::size_t max_tokens = 16);

struct TaskConfig {
  std::size_t corpus_size = 4000;
  std::size_t train_prompts = 2048;
  std::size_t test_prompts = 512;
  TruncationRange truncation{};
  std::uint64_t seed = 0;
};

struct Task {
  Vocabulary vocab;
  ValenceTable valence;
  BigramTable bigram;
  std::vector<TokenSequence> corpus;
  std::vector<TokenSequence> train_prompts;
  std::vector<TokenSequence> test_prompts;  ///< disjoint from train_prompts
};

/// Throws InvalidInput if the generator cannot supply enough distinct prompts.
Task generate_task(const TaskConfig& cfg);

}  // namespace apl::synthetic

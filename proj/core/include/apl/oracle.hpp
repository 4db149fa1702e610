#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apl/rng.hpp"
#include "apl/templates.hpp"
#include "apl/vocabulary.hpp"

namespace apl {

enum class Slot { A, B };

char slot_char(Slot s) noexcept;
/// Accepts "A" or "B" (case-sensitive).
std::optional<Slot> parse_slot(std::string_view s) noexcept;

/// Which original completion sits in which presented slot.
struct OrderMap {
  bool swapped = false;  ///< false: A shows y1, B shows y2

  /// 0 for y1, 1 for y2.
  int completion_in(Slot s) const noexcept { return (s == Slot::A) != swapped ? 0 : 1; }
  friend bool operator==(const OrderMap&, const OrderMap&) = default;
};

/// Maps a raw slot choice back to the original completion index (0 = y1, 1 = y2).
inline int demap(Slot raw_choice, const OrderMap& order) noexcept { return order.completion_in(raw_choice); }

/// An unlabeled pair awaiting a judgement.
struct Comparison {
  std::uint64_t pair_id = 0;
  TokenSequence prompt;
  TokenSequence y1;
  TokenSequence y2;
};

struct JudgeRequest {
  TemplateId template_id = TemplateId::Sentiment;
  std::string prompt;
  std::string completion_a;
  std::string completion_b;
  double temperature = 0.05;

  void validate() const;
};

/// A comparison as shown to an oracle: completions assigned to slots A and B.
struct PresentedPair {
  std::uint64_t pair_id = 0;
  TokenSequence prompt;
  TokenSequence slot_a;
  TokenSequence slot_b;
  JudgeRequest request;
  OrderMap order;
};

/// What an oracle says about a presented pair, before demapping.
struct Verdict {
  Slot choice = Slot::A;
  std::string rationale;
  bool degenerate = false;  ///< both slots held identical completions
};

struct OracleJudgement {
  std::uint64_t pair_id = 0;
  OrderMap presented_order;
  Slot raw_choice = Slot::A;
  int winner = 0;  ///< 0 = y1, 1 = y2
  std::optional<std::string> rationale;
  std::string oracle_id;
  std::int64_t latency_ms = 0;
  bool degenerate = false;

  friend bool operator==(const OracleJudgement&, const OracleJudgement&) = default;
};

/// {"pair_id","oracle_id","raw_choice","winner_index","rationale","presented_order","latency_ms"}
std::string to_jsonl_line(const OracleJudgement& j);
OracleJudgement judgement_from_json(const std::string& line);

/// Rendering context shared by every presented pair in a run.
struct PresentationContext {
  const Vocabulary* vocab = nullptr;  ///< detokenizer for the text fields; required for text oracles
  TemplateId template_id = TemplateId::Sentiment;
  double temperature = 0.05;
};

/// Seeded fair coin decides whether y1 is shown in slot A or slot B.
PresentedPair present_randomized(const Comparison& pair, std::uint64_t seed, const PresentationContext& ctx);

struct VerdictOutcome {
  std::optional<Verdict> verdict;
  std::exception_ptr error;
  std::int64_t latency_ms = 0;
};

/// Pairwise preference source.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string id() const = 0;
  /// Judges one presented pair. Throws on failure.
  virtual Verdict judge(const PresentedPair& pair) = 0;
  /// Judges a batch; results are aligned with the input. The default is sequential.
  virtual std::vector<VerdictOutcome> judge_batch(std::span<const PresentedPair> pairs);
};

struct LabelOutcome {
  std::optional<OracleJudgement> judgement;
  std::exception_ptr error;
};

/// Presents each comparison with its own order seed, asks the oracle, and demaps.
/// This is the single path by which every oracle's answers become judgements.
std::vector<LabelOutcome> label_batch(Oracle& oracle, std::span<const Comparison> pairs,
                                      std::span<const std::uint64_t> order_seeds, const PresentationContext& ctx);

/// Single-pair form of label_batch; rethrows the oracle's error.
OracleJudgement label(Oracle& oracle, const Comparison& pair, std::uint64_t order_seed,
                      const PresentationContext& ctx);

struct ConsistencyResult {
  double consistency = 0.0;  ///< fraction of evaluated pairs with unanimous winners
  std::size_t evaluated = 0;
  std::size_t failed = 0;    ///< pairs excluded because some query failed
};

/// Queries every pair `repeats` times with independent order randomization.
ConsistencyResult consistency_check(Oracle& oracle, std::span<const Comparison> pairs, std::size_t repeats,
                                    std::uint64_t seed, const PresentationContext& ctx);

struct TruncationRange {
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 8;
};

/// Range used for long-form review prompts.
inline constexpr TruncationRange kReviewTruncation{8, 16};

/// Keeps a prefix whose length is uniform on [min, max], clamped to the input length.
TokenSequence truncate_prompt(const TokenSequence& text, Rng& rng, TruncationRange range = {});

}  // namespace apl

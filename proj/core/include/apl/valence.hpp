#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "apl/oracle.hpp"

namespace apl {

/// Per-token valence weights. EOS (and BOS) carry zero valence.
class ValenceTable {
 public:
  ValenceTable() = default;
  /// Throws InvalidInput if EOS has nonzero valence or any entry is non-finite.
  explicit ValenceTable(std::vector<double> weights);

  double operator[](TokenId id) const;
  std::size_t size() const noexcept { return weights_.size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }

  /// JSON object {"valence": [..]} indexed by token id.
  static ValenceTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<double> weights_;
};

struct ValenceRules {
  /// Added once per immediate token repetition; -0.5 when the grammar proxy is on.
  double repetition_penalty = 0.0;

  static ValenceRules with_grammar_proxy() { return {-0.5}; }
};

double valence_score(const ValenceTable& table, const TokenSequence& completion, const ValenceRules& rules = {});

/// 0 if `a` wins, 1 if `b` wins: larger valence, then fewer tokens, then the
/// lexicographically smaller sequence. Identical inputs return 0 and set *degenerate.
int valence_compare(const ValenceTable& table, const TokenSequence& a, const TokenSequence& b,
                    const ValenceRules& rules, bool* degenerate = nullptr);

/// Direct (unpresented) judgement of y1 against y2.
OracleJudgement valence_judge(const ValenceTable& table, const TokenSequence& prompt, const TokenSequence& y1,
                              const TokenSequence& y2, const ValenceRules& rules = {});

/// Deterministic rule-based oracle over presented slots.
class ValenceOracle final : public Oracle {
 public:
  explicit ValenceOracle(ValenceTable table, ValenceRules rules = {});

  std::string id() const override { return "valence"; }
  Verdict judge(const PresentedPair& pair) override;

  const ValenceTable& table() const noexcept { return table_; }
  const ValenceRules& rules() const noexcept { return rules_; }

 private:
  ValenceTable table_;
  ValenceRules rules_;
};

}  // namespace apl

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace apl {

using TokenId = std::uint32_t;

/// Index 0 is always BOS (the context padding token) and index 1 always EOS.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;

/// A token sequence. For completions, `terminated` is set when the sequence
/// ends with EOS or generation stopped at the token limit.
struct TokenSequence {
  std::vector<TokenId> tokens;
  bool terminated = false;

  bool empty() const noexcept { return tokens.empty(); }
  std::size_t size() const noexcept { return tokens.size(); }
  bool ends_with_eos() const noexcept { return !tokens.empty() && tokens.back() == kEos; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Dense token table. Token strings must be unique and whitespace-free.
class Vocabulary {
 public:
  /// `tokens[0]` is BOS and `tokens[1]` is EOS.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId bos() const noexcept { return kBos; }
  TokenId eos() const noexcept { return kEos; }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Whitespace tokenization. Throws InvalidInput on unknown tokens.
  std::vector<TokenId> encode(std::string_view line) const;
  /// Space-joined rendering; special tokens are skipped.
  std::string decode(std::span<const TokenId> ids) const;
  std::string decode(const TokenSequence& seq) const { return decode(seq.tokens); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Checks indices are in range and that EOS only appears as the final token.
void validate_sequence(const TokenSequence& seq, std::size_t vocab_size);

}  // namespace apl

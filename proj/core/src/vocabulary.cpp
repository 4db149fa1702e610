#include "apl/vocabulary.hpp"

#include <sstream>

#include "apl/errors.hpp"

namespace apl {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) throw InvalidInput("vocabulary needs at least BOS and EOS");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
      throw InvalidInput("vocabulary token " + std::to_string(i) + " is empty or contains whitespace");
    if (!index_.emplace(t, static_cast<TokenId>(i)).second)
      throw InvalidInput("duplicate vocabulary token '" + t + "'");
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw InvalidInput("token id " + std::to_string(id) + " out of vocabulary");
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view line) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(line)};
  std::string word;
  while (in >> word) {
    auto id = find(word);
    if (!id) throw InvalidInput("unknown token '" + word + "'");
    out.push_back(*id);
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void validate_sequence(const TokenSequence& seq, std::size_t vocab_size) {
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const TokenId id = seq.tokens[i];
    if (id >= vocab_size)
      throw InvalidInput("token " + std::to_string(id) + " out of vocabulary of size " + std::to_string(vocab_size));
    if (id == kEos && i + 1 != seq.tokens.size())
      throw InvalidInput("EOS may only appear as the final token");
  }
}

}  // namespace apl

#include "apl/valence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

ValenceTable::ValenceTable(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.size() < 2) throw InvalidInput("valence table must cover BOS and EOS");
  for (double w : weights_)
    if (!std::isfinite(w)) throw InvalidInput("valence weights must be finite");
  if (weights_[kEos] != 0.0) throw InvalidInput("EOS valence must be 0");
}

double ValenceTable::operator[](TokenId id) const {
  if (id >= weights_.size()) throw InvalidInput("token " + std::to_string(id) + " has no valence entry");
  return weights_[id];
}

ValenceTable ValenceTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open valence table " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return ValenceTable(j.at("valence").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed valence table " + path.string() + ": " + e.what());
  }
}

void ValenceTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json{{"valence", weights_}}.dump(2) << '\n';
}

double valence_score(const ValenceTable& table, const TokenSequence& completion, const ValenceRules& rules) {
  double total = 0.0;
  for (std::size_t i = 0; i < completion.tokens.size(); ++i) {
    total += table[completion.tokens[i]];
    if (i > 0 && completion.tokens[i] == completion.tokens[i - 1]) total += rules.repetition_penalty;
  }
  return total;
}

int valence_compare(const ValenceTable& table, const TokenSequence& a, const TokenSequence& b,
                    const ValenceRules& rules, bool* degenerate) {
  if (degenerate) *degenerate = false;
  const double va = valence_score(table, a, rules);
  const double vb = valence_score(table, b, rules);
  if (va != vb) return va > vb ? 0 : 1;
  if (a.size() != b.size()) return a.size() < b.size() ? 0 : 1;
  if (a.tokens == b.tokens) {
    if (degenerate) *degenerate = true;
    return 0;
  }
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end()) ? 0 : 1;
}

OracleJudgement valence_judge(const ValenceTable& table, const TokenSequence& /*prompt*/, const TokenSequence& y1,
                              const TokenSequence& y2, const ValenceRules& rules) {
  OracleJudgement j;
  j.oracle_id = "valence";
  j.winner = valence_compare(table, y1, y2, rules, &j.degenerate);
  j.raw_choice = j.winner == 0 ? Slot::A : Slot::B;
  return j;
}

ValenceOracle::ValenceOracle(ValenceTable table, ValenceRules rules) : table_(std::move(table)), rules_(rules) {}

Verdict ValenceOracle::judge(const PresentedPair& pair) {
  Verdict v;
  v.choice = valence_compare(table_, pair.slot_a, pair.slot_b, rules_, &v.degenerate) == 0 ? Slot::A : Slot::B;
  return v;
}

}  // namespace apl

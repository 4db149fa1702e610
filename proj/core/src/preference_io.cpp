#include "apl/preference_io.hpp"

#include <fstream>

#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

using json = nlohmann::json;

namespace {

TokenSequence sequence_from(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) throw InvalidInput(std::string("missing array field '") + field + "'");
  TokenSequence seq;
  for (const auto& v : j[field]) {
    if (!v.is_number_unsigned()) throw InvalidInput(std::string("field '") + field + "' must hold token ids");
    seq.tokens.push_back(v.get<TokenId>());
  }
  return seq;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_from(const json& j, const char* field) {
  if (!j.contains(field) || j[field].is_null()) return std::nullopt;
  return j[field].get<double>();
}

}  // namespace

std::string to_jsonl_line(const PreferencePair& pair) {
  json j = json::object();
  j["prompt"] = pair.prompt.tokens;
  j["chosen"] = pair.chosen.tokens;
  j["rejected"] = pair.rejected.tokens;
  j["step"] = pair.acquired_step;
  j["entropy"] = optional_number(pair.entropy);
  j["certainty"] = optional_number(pair.certainty);
  return j.dump();
}

PreferencePair preference_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed preference line: ") + e.what());
  }
  PreferencePair p;
  p.prompt = sequence_from(j, "prompt");
  // stored completions are always finished generations
  p.chosen = sequence_from(j, "chosen");
  p.chosen.terminated = true;
  p.rejected = sequence_from(j, "rejected");
  p.rejected.terminated = true;
  p.acquired_step = j.value("step", 0);
  p.entropy = number_from(j, "entropy");
  p.certainty = number_from(j, "certainty");
  return p;
}

void append_preferences(const std::filesystem::path& path, std::span<const PreferencePair> pairs) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  for (const auto& p : pairs) out << to_jsonl_line(p) << '\n';
}

std::vector<PreferencePair> read_preferences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(preference_from_json(line));
    } catch (const InvalidInput& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace apl

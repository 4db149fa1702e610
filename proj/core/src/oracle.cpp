#include "apl/oracle.hpp"

#include <chrono>

#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

using json = nlohmann::json;

char slot_char(Slot s) noexcept { return s == Slot::A ? 'A' : 'B'; }

std::optional<Slot> parse_slot(std::string_view s) noexcept {
  if (s == "A") return Slot::A;
  if (s == "B") return Slot::B;
  return std::nullopt;
}

void JudgeRequest::validate() const {
  if (!(temperature >= 0.0)) throw InvalidInput("judge temperature must be >= 0");
  if (completion_a.empty() || completion_b.empty()) throw InvalidInput("judge completions must be nonempty");
}

std::string to_jsonl_line(const OracleJudgement& j) {
  json o = json::object();
  o["pair_id"] = j.pair_id;
  o["oracle_id"] = j.oracle_id;
  o["raw_choice"] = std::string(1, slot_char(j.raw_choice));
  o["winner_index"] = j.winner;
  o["rationale"] = j.rationale ? json(*j.rationale) : json(nullptr);
  o["presented_order"] = j.presented_order.swapped ? json::array({"y2", "y1"}) : json::array({"y1", "y2"});
  o["latency_ms"] = j.latency_ms;
  if (j.degenerate) o["degenerate"] = true;
  return o.dump();
}

OracleJudgement judgement_from_json(const std::string& line) {
  json o;
  try {
    o = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed judgement line: ") + e.what());
  }
  OracleJudgement j;
  j.pair_id = o.at("pair_id").get<std::uint64_t>();
  j.oracle_id = o.at("oracle_id").get<std::string>();
  const auto raw = parse_slot(o.at("raw_choice").get<std::string>());
  if (!raw) throw InvalidInput("raw_choice must be \"A\" or \"B\"");
  j.raw_choice = *raw;
  j.winner = o.at("winner_index").get<int>();
  if (o.contains("rationale") && !o["rationale"].is_null()) j.rationale = o["rationale"].get<std::string>();
  const auto& order = o.at("presented_order");
  j.presented_order.swapped = order.size() == 2 && order[0] == "y2";
  j.latency_ms = o.value("latency_ms", std::int64_t{0});
  j.degenerate = o.value("degenerate", false);
  if (j.degenerate ? j.winner != 0 : j.winner != demap(j.raw_choice, j.presented_order))
    throw InvalidInput("winner_index inconsistent with raw_choice and presented_order");
  return j;
}

PresentedPair present_randomized(const Comparison& pair, std::uint64_t seed, const PresentationContext& ctx) {
  Rng rng = make_rng(seed);
  PresentedPair p;
  p.pair_id = pair.pair_id;
  p.prompt = pair.prompt;
  p.order.swapped = std::bernoulli_distribution(0.5)(rng);
  p.slot_a = p.order.swapped ? pair.y2 : pair.y1;
  p.slot_b = p.order.swapped ? pair.y1 : pair.y2;
  p.request.template_id = ctx.template_id;
  p.request.temperature = ctx.temperature;
  if (ctx.vocab) {
    p.request.prompt = ctx.vocab->decode(p.prompt);
    p.request.completion_a = ctx.vocab->decode(p.slot_a);
    p.request.completion_b = ctx.vocab->decode(p.slot_b);
  }
  return p;
}

std::vector<VerdictOutcome> Oracle::judge_batch(std::span<const PresentedPair> pairs) {
  std::vector<VerdictOutcome> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out[i].verdict = judge(pairs[i]);
    } catch (...) {
      out[i].error = std::current_exception();
    }
    out[i].latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

std::vector<LabelOutcome> label_batch(Oracle& oracle, std::span<const Comparison> pairs,
                                      std::span<const std::uint64_t> order_seeds, const PresentationContext& ctx) {
  if (order_seeds.size() != pairs.size()) throw InvalidInput("one order seed is required per pair");
  std::vector<PresentedPair> presented;
  presented.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) presented.push_back(present_randomized(pairs[i], order_seeds[i], ctx));

  auto verdicts = oracle.judge_batch(presented);
  if (verdicts.size() != pairs.size()) throw Error("oracle returned a misaligned batch");

  const std::string oracle_id = oracle.id();
  std::vector<LabelOutcome> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!verdicts[i].verdict) {
      out[i].error = verdicts[i].error ? verdicts[i].error
                                       : std::make_exception_ptr(OracleUnavailable("oracle produced no verdict"));
      continue;
    }
    const Verdict& v = *verdicts[i].verdict;
    OracleJudgement j;
    j.pair_id = pairs[i].pair_id;
    j.presented_order = presented[i].order;
    j.raw_choice = v.choice;
    // identical completions: the slot choice carries no preference, so y1 is reported
    j.winner = v.degenerate ? 0 : demap(v.choice, presented[i].order);
    if (!v.rationale.empty()) j.rationale = v.rationale;
    j.oracle_id = oracle_id;
    j.latency_ms = verdicts[i].latency_ms;
    j.degenerate = v.degenerate;
    out[i].judgement = std::move(j);
  }
  return out;
}

OracleJudgement label(Oracle& oracle, const Comparison& pair, std::uint64_t order_seed,
                      const PresentationContext& ctx) {
  const std::uint64_t seeds[] = {order_seed};
  auto out = label_batch(oracle, std::span<const Comparison>(&pair, 1), seeds, ctx);
  if (out[0].error) std::rethrow_exception(out[0].error);
  return std::move(*out[0].judgement);
}

ConsistencyResult consistency_check(Oracle& oracle, std::span<const Comparison> pairs, std::size_t repeats,
                                    std::uint64_t seed, const PresentationContext& ctx) {
  if (repeats < 2) throw InvalidInput("consistency check needs repeats >= 2");
  // winners[i] collects every demapped winner for pair i; failed marks excluded pairs
  std::vector<std::vector<int>> winners(pairs.size());
  std::vector<bool> failed(pairs.size(), false);
  std::vector<std::uint64_t> seeds(pairs.size());
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < pairs.size(); ++i) seeds[i] = derive_seed(seed, "consistency", i, r);
    auto outcomes = label_batch(oracle, pairs, seeds, ctx);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (outcomes[i].judgement)
        winners[i].push_back(outcomes[i].judgement->winner);
      else
        failed[i] = true;
    }
  }
  ConsistencyResult result;
  std::size_t unanimous = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (failed[i]) {
      ++result.failed;
      continue;
    }
    ++result.evaluated;
    bool same = true;
    for (int w : winners[i]) same = same && w == winners[i].front();
    if (same) ++unanimous;
  }
  result.consistency = result.evaluated ? static_cast<double>(unanimous) / static_cast<double>(result.evaluated) : 0.0;
  return result;
}

TokenSequence truncate_prompt(const TokenSequence& text, Rng& rng, TruncationRange range) {
  if (text.empty()) throw InvalidInput("cannot truncate an empty prompt");
  if (range.min_tokens < 1 || range.min_tokens > range.max_tokens)
    throw InvalidInput("truncation range must satisfy 1 <= min <= max");
  const std::size_t len = std::uniform_int_distribution<std::size_t>(range.min_tokens, range.max_tokens)(rng);
  TokenSequence out;
  out.tokens.assign(text.tokens.begin(), text.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(len, text.size())));
  return out;
}

}  // namespace apl

#include "apl/synthetic.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "apl/errors.hpp"

namespace apl::synthetic {

namespace {

const std::vector<std::string> kWords = {"<bos>", "<eos>", "the",   "movie", "plot", "was", "and",   "great",
                                         "best",  "fun",   "good",  "fine",  "bad",  "awful", "worst", "boring"};

const std::map<std::string, double> kValence = {{"great", 2.0}, {"best", 2.0},   {"fun", 1.5},
                                                {"good", 1.0},  {"fine", 0.5},   {"bad", -1.0},
                                                {"awful", -2.0}, {"worst", -2.0}, {"boring", -1.0}};

const std::vector<std::string> kSentiment = {"great", "best", "fun",   "good",  "fine",
                                             "bad",   "awful", "worst", "boring"};

}  // namespace

Vocabulary valence_vocabulary() { return Vocabulary(kWords); }

ValenceTable valence_table(const Vocabulary& vocab) {
  std::vector<double> w(vocab.size(), 0.0);
  for (const auto& [word, v] : kValence)
    if (auto id = vocab.find(word)) w[*id] = v;
  return ValenceTable(std::move(w));
}

BigramTable bigram_table(const Vocabulary& vocab, std::uint64_t seed, double jitter) {
  const std::size_t V = vocab.size();
  BigramTable t(V, std::vector<double>(V, 0.0));
  const auto id = [&](const std::string& w) -> TokenId {
    auto found = vocab.find(w);
    if (!found) throw InvalidInput("vocabulary lacks '" + w + "'");
    return *found;
  };
  const auto set = [&](const std::string& from, const std::string& to, double w) { t[id(from)][id(to)] = w; };

  set("<bos>", "the", 0.85);
  set("<bos>", "movie", 0.1);
  set("<bos>", "plot", 0.05);
  set("the", "movie", 0.6);
  set("the", "plot", 0.4);
  for (const char* noun : {"movie", "plot"}) {
    set(noun, "was", 0.8);
    set(noun, "and", 0.15);
    set(noun, "<eos>", 0.05);
  }
  for (const auto& s : kSentiment) {
    set("was", s, 1.0);
    set("and", s, 0.6);
    set(s, "and", 0.3);
    set(s, "<eos>", 0.45);
    set(s, "the", 0.1);
    set(s, s, 0.05);
  }
  set("and", "the", 3.0);
  set("<eos>", "<eos>", 1.0);

  Rng rng = make_rng(derive_seed(seed, "bigram"));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t a = 0; a < V; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < V; ++b) {
      if (t[a][b] > 0.0 && a != kEos) t[a][b] *= std::exp(jitter * noise(rng));
      total += t[a][b];
    }
    if (total <= 0.0) {
      for (std::size_t b = 1; b < V; ++b) t[a][b] = 1.0;
      total = static_cast<double>(V - 1);
    }
    for (auto& p : t[a]) p /= total;
  }
  return t;
}

TokenSequence sample_bigram(const BigramTable& table, Rng& rng, std::size_t max_tokens) {
  TokenSequence out;
  TokenId prev = kBos;
  while (out.tokens.size() < max_tokens) {
    std::discrete_distribution<TokenId> next(table[prev].begin(), table[prev].end());
    const TokenId tok = next(rng);
    out.tokens.push_back(tok);
    if (tok == kEos) {
      out.terminated = true;
      break;
    }
    prev = tok;
  }
  return out;
}

Task generate_task(const TaskConfig& cfg) {
  Task task{valence_vocabulary(), {}, {}, {}, {}, {}};
  task.valence = valence_table(task.vocab);
  task.bigram = bigram_table(task.vocab, cfg.seed);

  Rng corpus_rng = make_rng(derive_seed(cfg.seed, "corpus"));
  task.corpus.reserve(cfg.corpus_size);
  while (task.corpus.size() < cfg.corpus_size) {
    auto s = sample_bigram(task.bigram, corpus_rng);
    if (s.size() > 1) task.corpus.push_back(std::move(s));
  }

  Rng prompt_rng = make_rng(derive_seed(cfg.seed, "prompts"));
  std::set<std::vector<TokenId>> seen;
  const auto fill = [&](std::vector<TokenSequence>& out, std::size_t n, const char* which) {
    // give up once new prompts have stopped turning up
    const std::size_t max_misses = 20000;
    for (std::size_t misses = 0; out.size() < n; ++misses) {
      if (misses >= max_misses)
        throw InvalidInput(std::string("could not draw ") + std::to_string(n) + " distinct " + which + " prompts");
      auto text = sample_bigram(task.bigram, prompt_rng);
      if (text.ends_with_eos()) text.tokens.pop_back();
      text.terminated = false;
      if (text.tokens.size() < cfg.truncation.min_tokens) continue;
      auto prompt = truncate_prompt(text, prompt_rng, cfg.truncation);
      if (seen.insert(prompt.tokens).second) {
        out.push_back(std::move(prompt));
        misses = 0;
      }
    }
  };
  fill(task.test_prompts, cfg.test_prompts, "test");
  fill(task.train_prompts, cfg.train_prompts, "train");
  return task;
}

}  // namespace apl::synthetic

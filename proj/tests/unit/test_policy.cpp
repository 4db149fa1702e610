#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "apl/errors.hpp"
#include "apl/policy.hpp"
#include "apl/synthetic.hpp"
#include "support.hpp"

using namespace apl;
using testing::seq;

TEST_CASE("parameter count follows the layout") {
  CHECK(testing::tiny_arch().parameter_count() == 8 * 4 + 8 * 2 * 4 + 8 + 8 * 8 + 8);
  CHECK(Architecture{}.parameter_count() == 16 * 16 + 32 * 4 * 16 + 32 + 16 * 32 + 16);
  CHECK_THROWS_AS(PolicyParams(testing::tiny_arch(), std::vector<double>(3)), InvalidInput);
}

TEST_CASE("uniform model gives n * ln(1/V)") {
  const auto p = testing::zero_params(testing::tiny_arch());
  CHECK(logprob(p, seq({2, 3}), seq({4, 5})) == doctest::Approx(2.0 * std::log(1.0 / 8.0)).epsilon(1e-12));
  CHECK(logprob(p, seq({2, 3}), seq({4, 5})) == doctest::Approx(-4.158883).epsilon(1e-6));
}

TEST_CASE("a token with probability one has log-probability zero") {
  std::vector<double> bias(8, 0.0);
  bias[3] = 1000.0;
  const auto p = testing::bias_only_params(testing::tiny_arch(), bias);
  CHECK(logprob(p, seq({2}), seq({3})) == 0.0);
}

TEST_CASE("logprob matches a brute-force product of per-step softmaxes") {
  const Architecture small{4, 2, 2, 4};
  REQUIRE(small.parameter_count() == 48);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = testing::random_params(small, s, 1.0);
    const auto prompt = seq({2, 3, 0});
    const auto y = seq({3, 2, 1}, true);
    CHECK(logprob(p, prompt, y) == doctest::Approx(testing::ref_logprob(p, prompt, y)).epsilon(1e-12));
  }
}

TEST_CASE("next-token distributions are normalized") {
  const auto p = testing::random_params(Architecture{}, 11, 0.3);
  for (std::vector<TokenId> ctx : {std::vector<TokenId>{}, {2, 5, 7}, {3, 3, 3, 3, 3, 9}}) {
    const auto probs = next_token_probs(p, ctx);
    double sum = 0.0;
    for (double q : probs) sum += q;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    const auto ref = testing::ref_next_probs(p, ctx);
    for (std::size_t v = 0; v < probs.size(); ++v) CHECK(probs[v] == doctest::Approx(ref[v]).epsilon(1e-12));
  }
}

TEST_CASE("grad_logprob agrees with central finite differences") {
  const auto arch = testing::tiny_arch();
  const auto p = testing::random_params(arch, 3);
  const auto prompt = seq({2, 5, 3});
  const auto y = seq({4, 6, 1}, true);
  const auto g = grad_logprob(p, prompt, y);
  REQUIRE(g.size() == p.size());

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  double worst = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t i = pick(rng);
    auto plus = p.values(), minus = p.values();
    plus[i] += h;
    minus[i] -= h;
    const double fd =
        (logprob(PolicyParams(arch, plus), prompt, y) - logprob(PolicyParams(arch, minus), prompt, y)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("parameters outside every context have zero gradient") {
  const auto arch = testing::tiny_arch();
  const auto p = testing::random_params(arch, 4);
  const auto g = grad_logprob(p, seq({2, 3}), seq({4, 1}, true));
  // token 6 never appears in any context window, so its embedding row is untouched
  for (std::size_t e = 0; e < arch.embed; ++e) CHECK(g[6 * arch.embed + e] == 0.0);
}

TEST_CASE("saturated one-hot path has a vanishing gradient") {
  std::vector<double> bias(8, -30.0);
  bias[3] = 30.0;
  const auto p = testing::bias_only_params(testing::tiny_arch(), bias);
  const auto g = grad_logprob(p, seq({2}), seq({3, 3}));
  double norm = 0.0;
  for (double x : g) norm += x * x;
  CHECK(std::sqrt(norm) < 1e-20);
}

TEST_CASE("non-finite parameters and unknown tokens are rejected") {
  auto v = testing::zero_params(testing::tiny_arch()).values();
  v[testing::b_out_offset(testing::tiny_arch())] = std::numeric_limits<double>::quiet_NaN();
  const PolicyParams bad(testing::tiny_arch(), v);
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(logprob(bad, seq({2}), seq({3})), NumericError);
  const auto ok = testing::zero_params(testing::tiny_arch());
  CHECK_THROWS_AS(logprob(ok, seq({2}), seq({8})), InvalidInput);
  CHECK_THROWS_AS(logprob(ok, seq({2}), seq({})), InvalidInput);
}

TEST_CASE("greedy decoding follows the argmax chain") {
  const auto p = testing::random_params(testing::tiny_arch(), 21, 1.5);
  const auto prompt = seq({2, 4});
  const auto y = sample(p, prompt, {0.0, 6, 1});
  std::vector<TokenId> hist = prompt.tokens, expected;
  for (int i = 0; i < 6; ++i) {
    const auto probs = testing::ref_next_probs(p, hist);
    const auto t = static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    expected.push_back(t);
    hist.push_back(t);
    if (t == kEos) break;
  }
  CHECK(y.tokens == expected);
  CHECK(y.terminated);
  // a vanishing temperature reproduces the greedy output
  CHECK(sample(p, prompt, {1e-4, 6, 5}).tokens == expected);
}

TEST_CASE("temperature-one sampling matches the softmax frequencies") {
  const Architecture arch{3, 1, 2, 2};
  const auto p = testing::bias_only_params(arch, {std::log(0.7), std::log(0.2), std::log(0.1)});
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample(p, seq({}), {1.0, 1, static_cast<std::uint64_t>(i)}).tokens.at(0)];
  CHECK(std::abs(counts[0] / double(n) - 0.7) <= 0.01);
  CHECK(std::abs(counts[1] / double(n) - 0.2) <= 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.1) <= 0.01);
}

TEST_CASE("sampling is reproducible under a fixed seed") {
  const auto p = testing::random_params(Architecture{}, 8, 0.4);
  const SamplingConfig cfg{0.7, 8, 1234};
  CHECK(sample(p, seq({2, 3}), cfg) == sample(p, seq({2, 3}), cfg));
  CHECK_THROWS_AS(SamplingConfig({-1.0, 8, 0}).validate(), InvalidInput);
}

TEST_CASE("pretraining lowers the corpus negative log-likelihood") {
  const Architecture arch{8, 2, 4, 8};
  const std::vector<TokenSequence> corpus(20, seq({2, 3, 4, 1}, true));
  PretrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 3;
  const auto init = init_params(arch, 3);
  const auto trained = pretrain(arch, corpus, cfg);
  CHECK(logprob(trained, seq({}), corpus[0]) > logprob(init, seq({}), corpus[0]));
  CHECK(corpus_nll(trained, corpus) < corpus_nll(init, corpus));

  cfg.epochs = 0;
  CHECK(pretrain(arch, corpus, cfg) == init);
  CHECK_THROWS_AS(pretrain(arch, std::vector<TokenSequence>{}, cfg), InvalidInput);
}

TEST_CASE("pretraining on a bigram corpus recovers the empirical transitions") {
  const auto vocab = synthetic::valence_vocabulary();
  const auto table = synthetic::bigram_table(vocab, 5);
  Rng rng = make_rng(17);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 3000; ++i) corpus.push_back(synthetic::sample_bigram(table, rng));

  // empirical next-token counts per previous token (BOS for the first position)
  const std::size_t V = vocab.size();
  std::vector<std::vector<double>> counts(V, std::vector<double>(V, 0.0));
  for (const auto& s : corpus) {
    TokenId prev = kBos;
    for (TokenId t : s.tokens) {
      counts[prev][t] += 1.0;
      prev = t;
    }
  }
  const Architecture arch{static_cast<std::uint32_t>(V), 1, 8, 32};
  PretrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 1e-2;
  cfg.seed = 1;
  const auto p = pretrain(arch, corpus, cfg);
  int checked = 0;
  for (TokenId prev = 0; prev < V; ++prev) {
    double total = 0.0;
    for (double c : counts[prev]) total += c;
    if (total < 300 || prev == kEos) continue;
    const std::vector<TokenId> ctx = prev == kBos ? std::vector<TokenId>{} : std::vector<TokenId>{prev};
    const auto probs = next_token_probs(p, ctx);
    double tv = 0.0;
    for (TokenId t = 0; t < V; ++t) tv += std::abs(probs[t] - counts[prev][t] / total);
    CHECK_MESSAGE(tv / 2.0 <= 0.1, "context token " << prev);
    ++checked;
  }
  CHECK(checked >= 5);
}

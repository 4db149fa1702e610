#include <doctest.h>

#include <cmath>

#include "apl/dpo.hpp"
#include "apl/errors.hpp"
#include "support.hpp"

using namespace apl;
using testing::seq;

namespace {

std::vector<PreferencePair> random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> tok(2, 7);
  std::uniform_int_distribution<int> len(1, 3);
  const auto draw = [&](bool terminated) {
    TokenSequence s;
    for (int i = len(rng); i > 0; --i) s.tokens.push_back(tok(rng));
    if (terminated) s.tokens.push_back(kEos);
    s.terminated = terminated;
    return s;
  };
  std::vector<PreferencePair> out;
  while (out.size() < n) {
    PreferencePair p;
    p.prompt = draw(false);
    p.chosen = draw(true);
    p.rejected = draw(true);
    if (p.chosen == p.rejected) continue;
    out.push_back(p);
  }
  return out;
}

// independent scalar oracle: -log sigmoid(m) = log(1 + e^-m)
double neg_log_sigmoid(double m) { return std::log1p(std::exp(-m)); }

}  // namespace

TEST_CASE("implicit reward is beta times the log-ratio") {
  const auto arch = testing::tiny_arch();
  // bias-only models giving token 3 a log-probability of exactly -2 and -3
  const auto model_with_logp = [&](double lp) {
    std::vector<double> bias(8, 0.0);
    const double q = std::exp(lp);
    bias[3] = std::log(7.0 * q / (1.0 - q));
    return testing::bias_only_params(arch, bias);
  };
  const auto cur = model_with_logp(-2.0), ref = model_with_logp(-3.0);
  REQUIRE(logprob(cur, seq({2}), seq({3})) == doctest::Approx(-2.0).epsilon(1e-13));
  CHECK(implicit_reward(cur, ref, 0.2, seq({2}), seq({3})) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(implicit_reward(ref, cur, 0.2, seq({2}), seq({3})) == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(implicit_reward(cur, cur, 0.2, seq({2}), seq({3, 4})) == 0.0);
  CHECK_THROWS_AS(implicit_reward(cur, testing::zero_params(Architecture{}), 0.2, seq({2}), seq({3})), InvalidInput);
}

TEST_CASE("log_sigmoid is stable and matches the scalar oracle") {
  CHECK(-log_sigmoid(0.4) == doctest::Approx(0.513015).epsilon(1e-6));
  CHECK(-log_sigmoid(0.4) == doctest::Approx(neg_log_sigmoid(0.4)).epsilon(1e-14));
  CHECK(log_sigmoid(-1000.0) == doctest::Approx(-1000.0));
  CHECK(std::isfinite(log_sigmoid(1000.0)));
  CHECK(log_sigmoid(0.0) == -std::log(2.0));
}

TEST_CASE("DPO loss is ln 2 and weights are one half at the reference") {
  const auto p = testing::random_params(testing::tiny_arch(), 5);
  const auto batch = random_pairs(12, 1);
  CHECK(std::abs(dpo_loss(p, p, 0.2, batch) - std::log(2.0)) <= 1e-12);
  for (double w : dpo_weights(p, p, 0.2, batch)) CHECK(std::abs(w - 0.5) <= 1e-12);
  CHECK_THROWS_AS(dpo_loss(p, p, 0.2, std::vector<PreferencePair>{}), InvalidInput);
}

TEST_CASE("DPO loss is the mean of per-pair terms") {
  const auto arch = testing::tiny_arch();
  const auto cur = testing::random_params(arch, 6), ref = testing::random_params(arch, 7);
  const auto batch = random_pairs(9, 2);
  double expected = 0.0;
  for (const auto& pr : batch) {
    const double m = 0.2 * ((testing::ref_logprob(cur, pr.prompt, pr.chosen) - testing::ref_logprob(ref, pr.prompt, pr.chosen)) -
                            (testing::ref_logprob(cur, pr.prompt, pr.rejected) - testing::ref_logprob(ref, pr.prompt, pr.rejected)));
    expected += neg_log_sigmoid(m);
  }
  expected /= static_cast<double>(batch.size());
  CHECK(dpo_loss(cur, ref, 0.2, batch) == doctest::Approx(expected).epsilon(1e-11));
  CHECK(dpo_loss(cur, ref, 0.2, batch) > 0.0);
}

TEST_CASE("loss decreases monotonically towards zero as the margin saturates") {
  const auto arch = testing::tiny_arch();
  const auto ref = testing::zero_params(arch);
  PreferencePair pr{seq({2}), seq({3}), seq({4}), 1, {}, {}};
  double previous = dpo_loss(ref, ref, 0.2, std::span(&pr, 1));
  for (double logit : {1.0, 3.0, 10.0, 30.0, 100.0}) {
    std::vector<double> bias(8, 0.0);
    bias[3] = logit;
    bias[4] = -logit;
    const double loss = dpo_loss(testing::bias_only_params(arch, bias), ref, 0.2, std::span(&pr, 1));
    CHECK(loss < previous);
    CHECK(loss >= 0.0);
    previous = loss;
  }
  CHECK(previous < 1e-8);
}

TEST_CASE("dpo_grad agrees with finite differences and with the weighted form") {
  const auto arch = testing::tiny_arch();
  const auto cur = testing::random_params(arch, 8), ref = testing::random_params(arch, 9);
  const auto batch = random_pairs(5, 3);
  const auto g = dpo_grad(cur, ref, 0.2, batch);
  const auto gw = dpo_grad_weighted(cur, ref, 0.2, batch);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) max_diff = std::max(max_diff, std::abs(g[i] - gw[i]));
  CHECK(max_diff <= 1e-10);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, cur.size() - 1);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t i = pick(rng);
    auto plus = cur.values(), minus = cur.values();
    plus[i] += h;
    minus[i] -= h;
    const double fd = (dpo_loss(PolicyParams(arch, plus), ref, 0.2, batch) -
                       dpo_loss(PolicyParams(arch, minus), ref, 0.2, batch)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("weights exceed one half exactly when the pair is ranked wrongly") {
  const auto arch = testing::tiny_arch();
  const auto cur = testing::random_params(arch, 10), ref = testing::random_params(arch, 11);
  const auto batch = random_pairs(40, 4);
  const auto w = dpo_weights(cur, ref, 0.2, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double margin = implicit_reward(cur, ref, 0.2, batch[i].prompt, batch[i].chosen) -
                          implicit_reward(cur, ref, 0.2, batch[i].prompt, batch[i].rejected);
    CHECK(w[i] > 0.0);
    CHECK(w[i] < 1.0);
    CHECK((w[i] > 0.5) == (margin < 0.0));
  }
}

TEST_CASE("shifting every output logit leaves rewards and loss unchanged") {
  const auto arch = testing::tiny_arch();
  const auto cur = testing::random_params(arch, 12), ref = testing::random_params(arch, 13);
  const auto shift = [&](const PolicyParams& p) {
    auto v = p.values();
    for (std::size_t i = 0; i < 8; ++i) v[testing::b_out_offset(arch) + i] += 3.7;
    return PolicyParams(arch, v);
  };
  const auto batch = random_pairs(6, 5);
  CHECK(dpo_loss(shift(cur), shift(ref), 0.2, batch) == doctest::Approx(dpo_loss(cur, ref, 0.2, batch)).epsilon(1e-12));
}

TEST_CASE("finetune_reset trains from theta0 and is deterministic") {
  const auto arch = testing::tiny_arch();
  const auto theta0 = testing::random_params(arch, 14, 0.1);
  const auto data = random_pairs(64, 6);
  DPOConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 10;
  const auto trained = finetune_reset(theta0, data, cfg, 7);
  CHECK(dpo_loss(trained, theta0, cfg.beta, data) < std::log(2.0));
  double margin = 0.0;
  for (const auto& pr : data)
    margin += implicit_reward(trained, theta0, cfg.beta, pr.prompt, pr.chosen) -
              implicit_reward(trained, theta0, cfg.beta, pr.prompt, pr.rejected);
  CHECK(margin / 64.0 > 0.0);
  CHECK(finetune_reset(theta0, data, cfg, 7) == trained);

  cfg.epochs = 0;
  CHECK(finetune_reset(theta0, data, cfg, 7) == theta0);
  CHECK_THROWS_AS(finetune_reset(theta0, std::vector<PreferencePair>{}, cfg, 7), InvalidInput);
}

TEST_CASE("early stopping halts on a validation plateau") {
  const auto arch = testing::tiny_arch();
  const auto theta0 = testing::random_params(arch, 15, 0.1);
  const auto data = random_pairs(32, 7);
  const auto validation = random_pairs(8, 8);
  DPOConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 200;
  cfg.early_stop.enabled = true;
  std::vector<double> losses;
  FinetuneOptions opts;
  opts.validation = validation;
  opts.epoch_losses = &losses;
  finetune_reset(theta0, data, cfg, 1, opts);
  CHECK(losses.size() < 200);
  CHECK_THROWS_AS(finetune_reset(theta0, data, cfg, 1), InvalidInput);
}

TEST_CASE("finetune_online takes one persistent Adam step") {
  const auto arch = testing::tiny_arch();
  const auto theta0 = testing::random_params(arch, 16, 0.1);
  const auto batch = random_pairs(16, 9);
  DPOConfig cfg;
  cfg.lr = 1e-3;

  Adam a(theta0.size()), b(theta0.size());
  const auto t1 = finetune_online(theta0, theta0, batch, cfg, a);
  CHECK(dpo_loss(t1, theta0, cfg.beta, batch) < dpo_loss(theta0, theta0, cfg.beta, batch));
  CHECK(a.steps() == 1);
  CHECK(finetune_online(theta0, theta0, batch, cfg, b) == t1);
  finetune_online(t1, theta0, batch, cfg, a);
  CHECK(a.steps() == 2);

  // identical completions give an exactly zero gradient
  std::vector<PreferencePair> flat(4, PreferencePair{seq({2}), seq({3, 1}, true), seq({3, 1}, true), 1, {}, {}});
  Adam c(theta0.size());
  const auto same = finetune_online(theta0, theta0, flat, cfg, c);
  double drift = 0.0;
  for (std::size_t i = 0; i < same.size(); ++i) drift = std::max(drift, std::abs(same.values()[i] - theta0.values()[i]));
  CHECK(drift < 1e-12);
}

TEST_CASE("DPO configuration validation and the large-model preset") {
  DPOConfig cfg;
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DPOConfig{};
  cfg.adam_beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DPOConfig{};
  cfg.minibatch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const auto large = DPOConfig::large_model_preset();
  CHECK(large.lr == 1e-6);
  CHECK(large.minibatch == 64);
  CHECK(large.epochs == 50);
  CHECK(large.beta == 0.2);
}

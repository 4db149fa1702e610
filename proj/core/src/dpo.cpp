#include "apl/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

void DPOConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("dpo.beta", "must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("dpo.lr", "must be > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("dpo.adam_beta1", "must lie in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("dpo.adam_beta2", "must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("dpo.adam_eps", "must be > 0");
  if (minibatch < 1) throw ConfigError("dpo.minibatch", "must be >= 1");
  if (epochs < 0) throw ConfigError("dpo.epochs", "must be >= 0");
  if (early_stop.enabled && early_stop.patience < 1)
    throw ConfigError("dpo.early_stop.patience", "must be >= 1");
}

DPOConfig DPOConfig::large_model_preset() {
  DPOConfig cfg;
  cfg.lr = 1e-6;
  cfg.minibatch = 64;
  cfg.epochs = 50;
  return cfg;
}

double log_sigmoid(double x) noexcept {
  // log sigma(x) = -softplus(-x), split on sign so exp never overflows
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void require_same_arch(const PolicyParams& a, const PolicyParams& b) {
  if (!(a.arch() == b.arch())) throw InvalidInput("policy and reference architectures differ");
}

void require_batch(std::span<const PreferencePair> batch) {
  if (batch.empty()) throw InvalidInput("preference batch is empty");
}

struct RefLogprobs {
  double chosen;
  double rejected;
};

std::vector<RefLogprobs> reference_logprobs(const PolicyParams& ref, std::span<const PreferencePair> batch) {
  std::vector<RefLogprobs> out;
  out.reserve(batch.size());
  for (const auto& p : batch)
    out.push_back({logprob(ref, p.prompt, p.chosen), logprob(ref, p.prompt, p.rejected)});
  return out;
}

double margin(double beta, double lp_w, double lp_l, const RefLogprobs& r) {
  return beta * (lp_w - r.chosen) - beta * (lp_l - r.rejected);
}

double loss_with_refs(const PolicyParams& params, double beta, std::span<const PreferencePair> batch,
                      std::span<const RefLogprobs> refs) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    const double m = margin(beta, logprob(params, p.prompt, p.chosen), logprob(params, p.prompt, p.rejected), refs[i]);
    total -= log_sigmoid(m);
  }
  const double loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("non-finite DPO loss");
  return loss;
}

// grad += d loss / d params for the pairs in `batch`, normalized by `denominator`.
void accumulate_grad(const PolicyParams& params, double beta, std::span<const PreferencePair> batch,
                     std::span<const RefLogprobs> refs, double denominator, std::span<double> grad) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    const SequencePass win(params, p.prompt, p.chosen);
    const SequencePass lose(params, p.prompt, p.rejected);
    const double m = margin(beta, win.logprob(), lose.logprob(), refs[i]);
    // d(-log sigma(m))/dm = -sigma(-m)
    const double upstream = -sigmoid(-m) / denominator;
    win.backward(upstream * beta, grad);
    lose.backward(-upstream * beta, grad);
  }
}

}  // namespace

double implicit_reward(const PolicyParams& params, const PolicyParams& ref, double beta,
                       const TokenSequence& prompt, const TokenSequence& completion) {
  require_same_arch(params, ref);
  return beta * (logprob(params, prompt, completion) - logprob(ref, prompt, completion));
}

double dpo_loss(const PolicyParams& params, const PolicyParams& ref, double beta,
                std::span<const PreferencePair> batch) {
  require_same_arch(params, ref);
  require_batch(batch);
  const auto refs = reference_logprobs(ref, batch);
  return loss_with_refs(params, beta, batch, refs);
}

std::vector<double> dpo_grad(const PolicyParams& params, const PolicyParams& ref, double beta,
                             std::span<const PreferencePair> batch) {
  require_same_arch(params, ref);
  require_batch(batch);
  const auto refs = reference_logprobs(ref, batch);
  std::vector<double> grad(params.size(), 0.0);
  accumulate_grad(params, beta, batch, refs, static_cast<double>(batch.size()), grad);
  return grad;
}

std::vector<double> dpo_weights(const PolicyParams& params, const PolicyParams& ref, double beta,
                                std::span<const PreferencePair> batch) {
  require_same_arch(params, ref);
  std::vector<double> w;
  w.reserve(batch.size());
  for (const auto& p : batch) {
    const double rw = implicit_reward(params, ref, beta, p.prompt, p.chosen);
    const double rl = implicit_reward(params, ref, beta, p.prompt, p.rejected);
    w.push_back(sigmoid(rl - rw));
  }
  return w;
}

std::vector<double> dpo_grad_weighted(const PolicyParams& params, const PolicyParams& ref, double beta,
                                      std::span<const PreferencePair> batch) {
  require_same_arch(params, ref);
  require_batch(batch);
  const auto weights = dpo_weights(params, ref, beta, batch);
  std::vector<double> grad(params.size(), 0.0);
  const double n = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto gw = grad_logprob(params, batch[i].prompt, batch[i].chosen);
    const auto gl = grad_logprob(params, batch[i].prompt, batch[i].rejected);
    const double c = -beta * weights[i] / n;
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += c * (gw[j] - gl[j]);
  }
  return grad;
}

PolicyParams finetune_reset(const PolicyParams& theta0, std::span<const PreferencePair> dataset,
                            const DPOConfig& cfg, std::uint64_t seed, const FinetuneOptions& options) {
  cfg.validate();
  require_batch(dataset);
  if (cfg.epochs == 0) return theta0;
  if (cfg.early_stop.enabled && options.validation.empty())
    throw InvalidInput("early stopping requires a validation set");

  const Architecture arch = theta0.arch();
  const auto refs = reference_logprobs(theta0, dataset);
  const auto val_refs = reference_logprobs(theta0, options.validation);

  std::vector<double> theta = theta0.values();
  std::vector<double> grad(theta.size());
  Adam adam(theta.size());
  const AdamConfig adam_cfg = cfg.adam();

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed);
  std::vector<PreferencePair> mb_pairs;
  std::vector<RefLogprobs> mb_refs;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta;
  int stale = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      mb_pairs.clear();
      mb_refs.clear();
      for (std::size_t i = start; i < end; ++i) {
        mb_pairs.push_back(dataset[order[i]]);
        mb_refs.push_back(refs[order[i]]);
      }
      const PolicyParams current(arch, theta);
      std::fill(grad.begin(), grad.end(), 0.0);
      accumulate_grad(current, cfg.beta, mb_pairs, mb_refs, static_cast<double>(mb_pairs.size()), grad);
      adam.step(theta, grad, adam_cfg);
    }
    if (options.epoch_losses)
      options.epoch_losses->push_back(loss_with_refs(PolicyParams(arch, theta), cfg.beta, dataset, refs));
    if (cfg.early_stop.enabled) {
      const double val = loss_with_refs(PolicyParams(arch, theta), cfg.beta, options.validation, val_refs);
      if (val < best_val - cfg.early_stop.min_delta) {
        best_val = val;
        best_theta = theta;
        stale = 0;
      } else if (++stale >= cfg.early_stop.patience) {
        theta = best_theta;
        break;
      }
    }
  }
  for (double v : theta)
    if (!std::isfinite(v)) throw NumericError("fine-tuning diverged to non-finite parameters");
  return PolicyParams(arch, std::move(theta));
}

PolicyParams finetune_online(const PolicyParams& theta_t, const PolicyParams& theta0,
                             std::span<const PreferencePair> latest_batch, const DPOConfig& cfg,
                             Adam& state) {
  cfg.validate();
  const auto grad = dpo_grad(theta_t, theta0, cfg.beta, latest_batch);
  std::vector<double> theta = theta_t.values();
  state.step(theta, grad, cfg.adam());
  return PolicyParams(theta_t.arch(), std::move(theta));
}

}  // namespace apl

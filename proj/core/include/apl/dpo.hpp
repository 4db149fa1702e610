#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "apl/adam.hpp"
#include "apl/policy.hpp"

namespace apl {

/// Plateau-based early stopping on a held-out validation loss. Off by default.
struct EarlyStopping {
  bool enabled = false;
  int patience = 5;
  double min_delta = 1e-4;
};

struct DPOConfig {
  double beta = 0.2;  ///< KL coefficient
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t minibatch = 16;
  int epochs = 30;
  EarlyStopping early_stop{};

  void validate() const;
  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }

  /// Billion-parameter settings (Adam lr 1e-6, minibatch 64, 50 epochs).
  static DPOConfig large_model_preset();
};

struct PreferencePair {
  TokenSequence prompt;
  TokenSequence chosen;    ///< oracle-preferred completion
  TokenSequence rejected;
  int acquired_step = 0;
  std::optional<double> entropy;
  std::optional<double> certainty;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// beta * (log p_params(y|x) - log p_ref(y|x)).
double implicit_reward(const PolicyParams& params, const PolicyParams& ref, double beta,
                       const TokenSequence& prompt, const TokenSequence& completion);

/// Numerically stable log(sigmoid(x)).
double log_sigmoid(double x) noexcept;
double sigmoid(double x) noexcept;

/// -mean log sigmoid(r(x, chosen) - r(x, rejected)).
double dpo_loss(const PolicyParams& params, const PolicyParams& ref, double beta,
                std::span<const PreferencePair> batch);

/// Gradient of dpo_loss, by backpropagating the loss through both sequence passes.
std::vector<double> dpo_grad(const PolicyParams& params, const PolicyParams& ref, double beta,
                             std::span<const PreferencePair> batch);

/// The same gradient assembled from per-sequence log-probability gradients:
/// -beta * mean[w * (grad log p(chosen) - grad log p(rejected))],
/// with w = sigmoid(r(rejected) - r(chosen)).
std::vector<double> dpo_grad_weighted(const PolicyParams& params, const PolicyParams& ref, double beta,
                                      std::span<const PreferencePair> batch);

/// Per-pair weights w = sigmoid(r(rejected) - r(chosen)).
std::vector<double> dpo_weights(const PolicyParams& params, const PolicyParams& ref, double beta,
                                std::span<const PreferencePair> batch);

/// Optional extras for finetune_reset.
struct FinetuneOptions {
  /// Validation pairs for early stopping; required when cfg.early_stop.enabled.
  std::span<const PreferencePair> validation{};
  /// When set, receives the training loss after each epoch.
  std::vector<double>* epoch_losses = nullptr;
};

/// Fine-tunes from theta0 on the whole dataset with a fresh Adam optimizer:
/// cfg.epochs epochs of seeded-shuffled minibatches. theta0 is the reference throughout.
PolicyParams finetune_reset(const PolicyParams& theta0, std::span<const PreferencePair> dataset,
                            const DPOConfig& cfg, std::uint64_t seed,
                            const FinetuneOptions& options = {});

/// One Adam step from theta_t on dpo_grad(theta_t, theta0, batch). `state`
/// carries the moment estimates across calls within a run.
PolicyParams finetune_online(const PolicyParams& theta_t, const PolicyParams& theta0,
                             std::span<const PreferencePair> latest_batch, const DPOConfig& cfg,
                             Adam& state);

}  // namespace apl

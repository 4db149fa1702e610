#include <algorithm>
#include <numeric>

#include "apl/adam.hpp"
#include "apl/errors.hpp"
#include "apl/policy.hpp"
#include "apl/rng.hpp"

namespace apl {

PolicyParams pretrain(const Architecture& arch, std::span<const TokenSequence> corpus,
                      const PretrainConfig& cfg) {
  if (corpus.empty()) throw InvalidInput("pretraining corpus is empty");
  if (cfg.minibatch == 0) throw InvalidInput("minibatch must be >= 1");
  if (cfg.epochs < 0) throw InvalidInput("epochs must be >= 0");
  PolicyParams params = init_params(arch, cfg.seed);
  if (cfg.epochs == 0) return params;

  for (const auto& seq : corpus) {
    if (seq.empty()) throw InvalidInput("corpus contains an empty sequence");
    validate_sequence(seq, arch.vocab_size);
  }

  std::vector<double> theta = params.values();
  Adam adam(theta.size());
  const AdamConfig adam_cfg{.lr = cfg.lr};
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(derive_seed(cfg.seed, "pretrain-shuffle"));
  const TokenSequence empty;
  std::vector<double> grad(theta.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      const PolicyParams current(arch, theta);
      std::fill(grad.begin(), grad.end(), 0.0);
      // minimize mean NLL => gradient of -logprob / batch
      const double scale = -1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i)
        SequencePass(current, empty, corpus[order[i]]).backward(scale, grad);
      adam.step(theta, grad, adam_cfg);
    }
  }
  return PolicyParams(arch, std::move(theta));
}

}  // namespace apl

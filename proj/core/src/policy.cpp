#include "apl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

std::size_t Architecture::parameter_count() const noexcept {
  return ParameterLayout::of(*this).total;
}

void Architecture::validate() const {
  if (vocab_size < 2) throw InvalidInput("vocab_size must be >= 2");
  if (context < 1 || embed < 1 || hidden < 1)
    throw InvalidInput("context, embed and hidden must be positive");
}

ParameterLayout ParameterLayout::of(const Architecture& a) noexcept {
  const std::size_t V = a.vocab_size, k = a.context, d = a.embed, h = a.hidden;
  ParameterLayout l;
  l.embedding = 0;
  l.w_hidden = l.embedding + V * d;
  l.b_hidden = l.w_hidden + h * k * d;
  l.w_out = l.b_hidden + h;
  l.b_out = l.w_out + V * h;
  l.total = l.b_out + V;
  return l;
}

PolicyParams::PolicyParams(Architecture arch, std::vector<double> values)
    : arch_(arch), values_(std::move(values)) {
  arch_.validate();
  if (values_.size() != arch_.parameter_count())
    throw InvalidInput("parameter vector has " + std::to_string(values_.size()) +
                       " entries, architecture requires " + std::to_string(arch_.parameter_count()));
}

bool PolicyParams::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-0.08, 0.08);
  std::vector<double> values(arch.parameter_count());
  for (double& v : values) v = dist(rng);
  return PolicyParams(arch, std::move(values));
}

void SamplingConfig::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw InvalidInput("sampling temperature must be finite and >= 0");
  if (max_tokens == 0) throw InvalidInput("max_tokens must be positive");
}

namespace {

// Gathers the k-token context ending just before `pos` in prompt ++ completion,
// left-padded with BOS.
void gather_context(const TokenSequence& prompt, std::span<const TokenId> completion,
                    std::size_t pos, std::size_t k, TokenId* out) {
  const std::size_t p = prompt.tokens.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(k) +
                               static_cast<std::ptrdiff_t>(j);
    if (idx < 0) {
      out[j] = kBos;
    } else if (static_cast<std::size_t>(idx) < p) {
      out[j] = prompt.tokens[idx];
    } else {
      out[j] = completion[idx - p];
    }
  }
}

// Forward through one position. Writes post-tanh hidden, raw logits and softmax
// probs; returns the log-normalizer. Throws NumericError on non-finite logits.
double forward_position(const Architecture& a, const ParameterLayout& l, const double* w,
                        const TokenId* ctx, double* hidden, double* logits, double* probs) {
  const std::size_t V = a.vocab_size, k = a.context, d = a.embed, h = a.hidden;
  const std::size_t kd = k * d;
  for (std::size_t u = 0; u < h; ++u) {
    const double* row = w + l.w_hidden + u * kd;
    double acc = w[l.b_hidden + u];
    for (std::size_t j = 0; j < k; ++j) {
      const double* emb = w + l.embedding + static_cast<std::size_t>(ctx[j]) * d;
      const double* r = row + j * d;
      for (std::size_t e = 0; e < d; ++e) acc += r[e] * emb[e];
    }
    hidden[u] = std::tanh(acc);
  }
  double zmax = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) {
    const double* row = w + l.w_out + v * h;
    double z = w[l.b_out + v];
    for (std::size_t u = 0; u < h; ++u) z += row[u] * hidden[u];
    if (!std::isfinite(z)) throw NumericError("non-finite logit; parameters contain NaN or Inf");
    logits[v] = z;
    zmax = std::max(zmax, z);
  }
  double sum = 0.0;
  for (std::size_t v = 0; v < V; ++v) sum += std::exp(logits[v] - zmax);
  const double log_norm = zmax + std::log(sum);
  for (std::size_t v = 0; v < V; ++v) probs[v] = std::exp(logits[v] - log_norm);
  return log_norm;
}

void check_tokens(const TokenSequence& seq, std::size_t V, const char* what) {
  for (TokenId t : seq.tokens)
    if (t >= V)
      throw InvalidInput(std::string(what) + " token " + std::to_string(t) +
                         " out of vocabulary of size " + std::to_string(V));
}

}  // namespace

SequencePass::SequencePass(const PolicyParams& params, const TokenSequence& prompt,
                           const TokenSequence& completion)
    : params_(&params) {
  const Architecture& a = params.arch();
  if (completion.empty()) throw InvalidInput("completion must be nonempty");
  check_tokens(prompt, a.vocab_size, "prompt");
  check_tokens(completion, a.vocab_size, "completion");

  const auto l = ParameterLayout::of(a);
  const std::size_t V = a.vocab_size, k = a.context, h = a.hidden;
  const std::size_t n = completion.size();
  const std::size_t p = prompt.size();
  positions_ = n;
  contexts_.resize(n * k);
  targets_ = completion.tokens;
  hidden_.resize(n * h);
  probs_.resize(n * V);

  const double* w = params.values().data();
  std::vector<double> logits(V);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TokenId* ctx = contexts_.data() + i * k;
    gather_context(prompt, completion.tokens, p + i, k, ctx);
    const double log_norm =
        forward_position(a, l, w, ctx, hidden_.data() + i * h, logits.data(), probs_.data() + i * V);
    total += logits[targets_[i]] - log_norm;
  }
  if (!std::isfinite(total)) throw NumericError("non-finite log-probability");
  logprob_ = std::min(total, 0.0);
}

void SequencePass::backward(double scale, std::span<double> grad) const {
  const Architecture& a = params_->arch();
  const auto l = ParameterLayout::of(a);
  if (grad.size() != l.total) throw InvalidInput("gradient buffer has the wrong length");
  const std::size_t V = a.vocab_size, k = a.context, d = a.embed, h = a.hidden;
  const std::size_t kd = k * d;
  const double* w = params_->values().data();

  std::vector<double> dz(V), dh(h), da(h), dx(kd);
  for (std::size_t i = 0; i < positions_; ++i) {
    const double* prob = probs_.data() + i * V;
    const double* hid = hidden_.data() + i * h;
    const TokenId* ctx = contexts_.data() + i * k;
    const TokenId y = targets_[i];

    for (std::size_t v = 0; v < V; ++v) dz[v] = -scale * prob[v];
    dz[y] += scale;

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double g = dz[v];
      grad[l.b_out + v] += g;
      double* gw = grad.data() + l.w_out + v * h;
      const double* row = w + l.w_out + v * h;
      for (std::size_t u = 0; u < h; ++u) {
        gw[u] += g * hid[u];
        dh[u] += row[u] * g;
      }
    }
    for (std::size_t u = 0; u < h; ++u) da[u] = dh[u] * (1.0 - hid[u] * hid[u]);

    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t u = 0; u < h; ++u) {
      const double g = da[u];
      grad[l.b_hidden + u] += g;
      double* gw = grad.data() + l.w_hidden + u * kd;
      const double* row = w + l.w_hidden + u * kd;
      for (std::size_t j = 0; j < k; ++j) {
        const double* emb = w + l.embedding + static_cast<std::size_t>(ctx[j]) * d;
        for (std::size_t e = 0; e < d; ++e) {
          gw[j * d + e] += g * emb[e];
          dx[j * d + e] += row[j * d + e] * g;
        }
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      double* ge = grad.data() + l.embedding + static_cast<std::size_t>(ctx[j]) * d;
      for (std::size_t e = 0; e < d; ++e) ge[e] += dx[j * d + e];
    }
  }
}

double logprob(const PolicyParams& params, const TokenSequence& prompt,
               const TokenSequence& completion) {
  return SequencePass(params, prompt, completion).logprob();
}

std::vector<double> grad_logprob(const PolicyParams& params, const TokenSequence& prompt,
                                 const TokenSequence& completion) {
  SequencePass pass(params, prompt, completion);
  std::vector<double> grad(params.size(), 0.0);
  pass.backward(1.0, grad);
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  return grad;
}

std::vector<double> next_token_probs(const PolicyParams& params, std::span<const TokenId> context) {
  const Architecture& a = params.arch();
  const auto l = ParameterLayout::of(a);
  TokenSequence prefix{{context.begin(), context.end()}, false};
  check_tokens(prefix, a.vocab_size, "context");
  std::vector<TokenId> ctx(a.context);
  gather_context(prefix, {}, prefix.size(), a.context, ctx.data());
  std::vector<double> hidden(a.hidden), logits(a.vocab_size), probs(a.vocab_size);
  forward_position(a, l, params.values().data(), ctx.data(), hidden.data(), logits.data(), probs.data());
  return probs;
}

TokenSequence sample(const PolicyParams& params, const TokenSequence& prompt,
                     const SamplingConfig& cfg) {
  cfg.validate();
  const Architecture& a = params.arch();
  check_tokens(prompt, a.vocab_size, "prompt");
  const auto l = ParameterLayout::of(a);
  const std::size_t V = a.vocab_size;
  const double* w = params.values().data();

  Rng rng = make_rng(cfg.seed);
  TokenSequence out;
  std::vector<TokenId> ctx(a.context);
  std::vector<double> hidden(a.hidden), probs(V), logits(V);
  while (out.size() < cfg.max_tokens) {
    gather_context(prompt, out.tokens, prompt.size() + out.size(), a.context, ctx.data());
    forward_position(a, l, w, ctx.data(), hidden.data(), logits.data(), probs.data());
    TokenId next = 0;
    if (cfg.temperature == 0.0) {
      next = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      double zmax = -INFINITY;
      for (std::size_t v = 0; v < V; ++v) {
        logits[v] /= cfg.temperature;
        zmax = std::max(zmax, logits[v]);
      }
      double sum = 0.0;
      for (std::size_t v = 0; v < V; ++v) sum += (probs[v] = std::exp(logits[v] - zmax));
      double u = uniform01(rng) * sum;
      next = static_cast<TokenId>(V - 1);
      for (std::size_t v = 0; v < V; ++v) {
        u -= probs[v];
        if (u < 0.0) {
          next = static_cast<TokenId>(v);
          break;
        }
      }
      // round-off can leave u >= 0 after the loop; fall back to the last token with mass
      while (probs[next] == 0.0 && next > 0) --next;
    }
    out.tokens.push_back(next);
    if (next == kEos) break;
  }
  out.terminated = true;
  return out;
}

double corpus_nll(const PolicyParams& params, std::span<const TokenSequence> corpus) {
  if (corpus.empty()) throw InvalidInput("corpus is empty");
  const TokenSequence empty;
  double total = 0.0;
  for (const auto& seq : corpus) total -= logprob(params, empty, seq);
  return total / static_cast<double>(corpus.size());
}

}  // namespace apl

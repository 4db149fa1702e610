#include "apl/engine.hpp"

#include <cmath>
#include <set>

#include "apl/acquisition.hpp"
#include "apl/errors.hpp"
#include "apl/rng.hpp"

namespace apl {

void PromptPools::validate() const {
  if (train.empty()) throw InvalidInput("training prompt pool is empty");
  if (test.empty()) throw InvalidInput("test prompt pool is empty");
  if (!reference_completions.empty() && reference_completions.size() != test.size())
    throw InvalidInput("reference completions must align with the test prompts");
  std::set<std::vector<TokenId>> train_set;
  for (const auto& p : train) train_set.insert(p.tokens);
  for (const auto& p : test)
    if (train_set.count(p.tokens)) throw InvalidInput("test prompts intersect the training pool");
}

WinRate evaluate_winrate(const PolicyParams& params, const PolicyParams& baseline,
                         std::span<const TokenSequence> prompts, Oracle& oracle, const PresentationContext& ctx,
                         const EvalOptions& options, OracleCounters* counters) {
  if (prompts.empty()) throw InvalidInput("win-rate evaluation needs at least one prompt");
  const bool use_reference = !options.reference_completions.empty();
  if (use_reference && options.reference_completions.size() != prompts.size())
    throw InvalidInput("reference completions must align with the prompts");

  std::vector<Comparison> pairs(prompts.size());
  std::vector<std::uint64_t> order_seeds(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SamplingConfig policy_cfg{options.temperature, options.max_tokens, derive_seed(options.seed, "eval-policy", i)};
    pairs[i].pair_id = options.pair_id_base + i;
    pairs[i].prompt = prompts[i];
    pairs[i].y1 = sample(params, prompts[i], policy_cfg);
    if (use_reference) {
      pairs[i].y2 = options.reference_completions[i];
    } else {
      SamplingConfig base_cfg{options.temperature, options.max_tokens, derive_seed(options.seed, "eval-baseline", i)};
      pairs[i].y2 = sample(baseline, prompts[i], base_cfg);
    }
    order_seeds[i] = derive_seed(options.seed, "eval-order", i);
  }

  const auto outcomes = label_batch(oracle, pairs, order_seeds, ctx);
  WinRate w;
  for (const auto& o : outcomes) {
    if (!o.judgement) {
      ++w.failed;
      continue;
    }
    ++w.evaluated;
    // a tie goes to whichever slot the oracle named, which is a fair coin over presentation order
    const auto& j = *o.judgement;
    if ((j.degenerate ? demap(j.raw_choice, j.presented_order) : j.winner) == 0) ++w.wins;
  }
  if (counters) {
    counters->eval_calls += outcomes.size();
    counters->eval_failures += w.failed;
  }
  if (w.evaluated == 0) {
    for (const auto& o : outcomes)
      if (o.error) std::rethrow_exception(o.error);
    throw OracleUnavailable("every evaluation query failed");
  }
  const double n = static_cast<double>(w.evaluated);
  w.rate = static_cast<double>(w.wins) / n;
  w.std_error = std::sqrt(w.rate * (1.0 - w.rate) / n);
  return w;
}

std::uint64_t finetune_seed(std::uint64_t run_seed, std::size_t step) noexcept {
  return derive_seed(run_seed, "shuffle", step);
}

bool is_validation_pair(std::size_t index) noexcept { return index % 8 == 7; }

Engine::Engine(RunConfig cfg, PolicyParams theta0, PromptPools pools, Oracle& oracle, PresentationContext ctx)
    : cfg_(std::move(cfg)), pools_(std::move(pools)), oracle_(&oracle), ctx_(ctx) {
  cfg_.validate();
  pools_.validate();
  if (!theta0.all_finite()) throw NumericError("initial parameters are not finite");
  state_.total_steps = plan_steps(cfg_.budget, cfg_.batch);
  state_.current = theta0;
  state_.reference = std::move(theta0);
  state_.optimizer = Adam(state_.reference.size());
}

Engine::Engine(RunConfig cfg, RunState state, PromptPools pools, Oracle& oracle, PresentationContext ctx)
    : cfg_(std::move(cfg)), state_(std::move(state)), pools_(std::move(pools)), oracle_(&oracle), ctx_(ctx) {
  cfg_.validate();
  pools_.validate();
  if (state_.total_steps != plan_steps(cfg_.budget, cfg_.batch))
    throw InvalidInput("restored state does not match the configured budget");
  if (state_.dataset.size() != state_.step * cfg_.batch)
    throw InvalidInput("restored dataset size does not equal t * M");
  started_ = true;
}

void Engine::add_sink(RunSink* sink) {
  if (sink) sinks_.push_back(sink);
}

std::optional<WinRate> Engine::maybe_evaluate(std::size_t dataset_size, const PolicyParams& params) {
  if (!cfg_.is_waypoint(dataset_size)) return std::nullopt;
  const std::size_t n = std::min(cfg_.eval_prompts, pools_.test.size());
  EvalOptions opts;
  opts.temperature = cfg_.eval_temperature;
  opts.max_tokens = cfg_.max_completion_tokens;
  // The same evaluation seed at a given waypoint keeps baseline samples paired across strategies.
  opts.seed = derive_seed(cfg_.seed, "eval", dataset_size);
  opts.pair_id_base = (std::uint64_t{1} << 40) + (static_cast<std::uint64_t>(dataset_size) << 20);
  if (cfg_.eval_baseline == EvalBaseline::Reference) {
    if (pools_.reference_completions.empty()) throw ConfigError("eval_baseline", "no reference completions supplied");
    opts.reference_completions = std::span<const TokenSequence>(pools_.reference_completions).first(n);
  }
  return evaluate_winrate(params, state_.reference, std::span<const TokenSequence>(pools_.test).first(n), *oracle_,
                          ctx_, opts, &state_.counters);
}

void Engine::start() {
  if (started_) return;
  started_ = true;
  if (auto eval = maybe_evaluate(0, state_.current)) {
    state_.history.push_back({0, 0, state_.counters.label_calls, state_.counters.eval_calls, eval});
  }
  for (auto* s : sinks_) s->on_start(cfg_, state_);
}

const StepRecord& Engine::step() {
  start();
  if (state_.finished()) throw RunFinished("run has used its budget after " + std::to_string(state_.step) + " steps");
  const std::size_t t = state_.step + 1;
  const std::size_t M = cfg_.batch;

  const auto acq = acquire_batch(state_.current, state_.reference, pools_.train,
                                 cfg_.acquisition(derive_seed(cfg_.seed, "step", t)));

  std::vector<Comparison> comparisons(M);
  std::vector<std::uint64_t> order_seeds(M);
  for (std::size_t i = 0; i < M; ++i) {
    const auto& c = acq.selected[i];
    comparisons[i] = {static_cast<std::uint64_t>((t - 1) * M + i), c.prompt, c.y1, c.y2};
    order_seeds[i] = derive_seed(cfg_.seed, "order", comparisons[i].pair_id);
  }
  const auto outcomes = label_batch(*oracle_, comparisons, order_seeds, ctx_);
  state_.counters.label_calls += outcomes.size();
  for (const auto& o : outcomes)
    if (!o.judgement) ++state_.counters.label_failures;
  for (const auto& o : outcomes)
    if (o.error) std::rethrow_exception(o.error);

  std::vector<PreferencePair> fresh(M);
  std::vector<OracleJudgement> fresh_judgements(M);
  for (std::size_t i = 0; i < M; ++i) {
    const auto& c = acq.selected[i];
    const auto& j = *outcomes[i].judgement;
    fresh[i].prompt = c.prompt;
    fresh[i].chosen = j.winner == 0 ? c.y1 : c.y2;
    fresh[i].rejected = j.winner == 0 ? c.y2 : c.y1;
    fresh[i].acquired_step = static_cast<int>(t);
    fresh[i].entropy = c.entropy;
    fresh[i].certainty = c.certainty;
    fresh_judgements[i] = j;
  }

  std::vector<PreferencePair> dataset = state_.dataset;
  dataset.insert(dataset.end(), fresh.begin(), fresh.end());

  const DPOConfig dpo = cfg_.finetune();
  PolicyParams next;
  Adam optimizer = state_.optimizer;
  if (cfg_.mode == FinetuneMode::Reset) {
    if (dpo.early_stop.enabled) {
      std::vector<PreferencePair> train, validation;
      for (std::size_t i = 0; i < dataset.size(); ++i)
        (is_validation_pair(i) ? validation : train).push_back(dataset[i]);
      if (validation.empty()) {
        DPOConfig no_stop = dpo;
        no_stop.early_stop.enabled = false;
        next = finetune_reset(state_.reference, dataset, no_stop, finetune_seed(cfg_.seed, t));
      } else {
        FinetuneOptions opts;
        opts.validation = validation;
        next = finetune_reset(state_.reference, train, dpo, finetune_seed(cfg_.seed, t), opts);
      }
    } else {
      next = finetune_reset(state_.reference, dataset, dpo, finetune_seed(cfg_.seed, t));
    }
  } else {
    next = finetune_online(state_.current, state_.reference, fresh, dpo, optimizer);
  }

  auto eval = maybe_evaluate(dataset.size(), next);

  state_.step = t;
  state_.dataset = std::move(dataset);
  state_.judgements.insert(state_.judgements.end(), fresh_judgements.begin(), fresh_judgements.end());
  state_.current = std::move(next);
  state_.optimizer = std::move(optimizer);
  state_.history.push_back({t, state_.dataset.size(), state_.counters.label_calls, state_.counters.eval_calls, eval});

  const StepRecord& record = state_.history.back();
  const StepDelta delta{std::span<const PreferencePair>(state_.dataset).last(M),
                        std::span<const OracleJudgement>(state_.judgements).last(M), &record};
  for (auto* s : sinks_) s->on_step(cfg_, state_, delta);
  if (state_.finished())
    for (auto* s : sinks_) s->on_finish(cfg_, state_);
  return record;
}

const RunState& Engine::run() {
  start();
  while (!state_.finished()) step();
  return state_;
}

RunState run(const RunConfig& cfg, const PolicyParams& theta0, const PromptPools& pools, Oracle& oracle,
             const PresentationContext& ctx, RunSink* sink) {
  Engine engine(cfg, theta0, pools, oracle, ctx);
  engine.add_sink(sink);
  return engine.run();
}

}  // namespace apl

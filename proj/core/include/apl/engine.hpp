#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "apl/adam.hpp"
#include "apl/dpo.hpp"
#include "apl/oracle.hpp"
#include "apl/policy.hpp"
#include "apl/run_config.hpp"

namespace apl {

struct OracleCounters {
  std::size_t label_calls = 0;     ///< labeling queries, successful or not
  std::size_t label_failures = 0;
  std::size_t eval_calls = 0;      ///< evaluation queries; never charged to the budget
  std::size_t eval_failures = 0;

  friend bool operator==(const OracleCounters&, const OracleCounters&) = default;
};

struct WinRate {
  double rate = 0.0;
  double std_error = 0.0;    ///< binomial sqrt(r (1 - r) / n)
  std::size_t wins = 0;
  std::size_t evaluated = 0;
  std::size_t failed = 0;    ///< prompts excluded because the oracle failed

  friend bool operator==(const WinRate&, const WinRate&) = default;
};

/// One metrics row. `eval` is set only at waypoints.
struct StepRecord {
  std::size_t step = 0;
  std::size_t dataset_size = 0;
  std::size_t label_calls = 0;
  std::size_t eval_calls = 0;
  std::optional<WinRate> eval;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct RunState {
  std::size_t step = 0;
  std::size_t total_steps = 0;
  std::vector<PreferencePair> dataset;
  std::vector<OracleJudgement> judgements;  ///< aligned with dataset
  PolicyParams current;
  PolicyParams reference;
  Adam optimizer;                           ///< persistent moments for online mode
  OracleCounters counters;
  std::vector<StepRecord> history;          ///< includes a step-0 row when 0 is a waypoint

  bool finished() const noexcept { return step >= total_steps; }
  friend bool operator==(const RunState&, const RunState&) = default;
};

/// Prompt sets for a run. `test` must not intersect `train`.
struct PromptPools {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> test;
  /// Gold completions aligned with `test`, used when eval_baseline = reference.
  std::vector<TokenSequence> reference_completions;

  void validate() const;
};

struct EvalOptions {
  double temperature = 0.25;
  std::size_t max_tokens = 8;
  std::uint64_t seed = 0;
  /// Offset for the pair ids of evaluation comparisons, so they never collide with labeling ids.
  std::uint64_t pair_id_base = 0;
  /// When nonempty, replaces baseline sampling; aligned with the prompts.
  std::span<const TokenSequence> reference_completions{};
};

/// Head-to-head win rate of `params` against `baseline` over `prompts`, judged with
/// order randomization. Oracle failures exclude the prompt and are counted.
WinRate evaluate_winrate(const PolicyParams& params, const PolicyParams& baseline,
                         std::span<const TokenSequence> prompts, Oracle& oracle, const PresentationContext& ctx,
                         const EvalOptions& options, OracleCounters* counters = nullptr);

/// What a step added, passed to sinks after the state transition.
struct StepDelta {
  std::span<const PreferencePair> pairs;
  std::span<const OracleJudgement> judgements;
  const StepRecord* record = nullptr;
};

/// Observer of run progress. Called synchronously on the engine thread.
class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void on_start(const RunConfig&, const RunState&) {}
  virtual void on_step(const RunConfig&, const RunState&, const StepDelta&) {}
  virtual void on_finish(const RunConfig&, const RunState&) {}
};

/// Drives the acquire, label, fine-tune, evaluate loop one step at a time.
class Engine {
 public:
  /// Fresh run from theta0.
  Engine(RunConfig cfg, PolicyParams theta0, PromptPools pools, Oracle& oracle, PresentationContext ctx);
  /// Continues from a restored state.
  Engine(RunConfig cfg, RunState state, PromptPools pools, Oracle& oracle, PresentationContext ctx);

  void add_sink(RunSink* sink);

  const RunConfig& config() const noexcept { return cfg_; }
  const RunState& state() const noexcept { return state_; }
  bool finished() const noexcept { return state_.finished(); }

  /// Runs one acquisition step. Throws RunFinished once t = T. An oracle failure
  /// leaves the state as it was before the step.
  const StepRecord& step();
  /// Steps until finished and notifies sinks.
  const RunState& run();

 private:
  void start();
  std::optional<WinRate> maybe_evaluate(std::size_t dataset_size, const PolicyParams& params);

  RunConfig cfg_;
  RunState state_;
  PromptPools pools_;
  Oracle* oracle_;
  PresentationContext ctx_;
  std::vector<RunSink*> sinks_;
  bool started_ = false;
};

/// Convenience wrapper: a fresh engine run to completion.
RunState run(const RunConfig& cfg, const PolicyParams& theta0, const PromptPools& pools, Oracle& oracle,
             const PresentationContext& ctx, RunSink* sink = nullptr);

/// Seed for finetune_reset at step t; exposed so stored datasets can be replayed.
std::uint64_t finetune_seed(std::uint64_t run_seed, std::size_t step) noexcept;

/// Validation split used when early stopping is enabled in reset mode: every eighth pair.
bool is_validation_pair(std::size_t index) noexcept;

}  // namespace apl

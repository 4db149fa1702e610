#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "apl/engine.hpp"

namespace apl {

inline constexpr std::uint32_t kRunStateVersion = 1;

/// On-disk layout of one run:
///   config.json  prefs.jsonl  judgements.jsonl  metrics.csv
///   checkpoints/step-<t>/{params.aplm, adam.bin, rng.json, state.json}
///   final/{params.aplm, state.json}
/// step-0 holds theta0. Data files are appended before each checkpoint is written.
class RunDirectory final : public RunSink {
 public:
  /// Creates the layout and freezes `cfg` into config.json. Refuses a directory
  /// that already holds a run.
  static RunDirectory create(const std::filesystem::path& root, const RunConfig& cfg);
  /// Opens an existing run for restore or resume.
  static RunDirectory open(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  const RunConfig& config() const noexcept { return cfg_; }
  std::filesystem::path checkpoint_dir(std::size_t step) const;
  std::filesystem::path prefs_path() const { return root_ / "prefs.jsonl"; }
  std::filesystem::path judgements_path() const { return root_ / "judgements.jsonl"; }
  std::filesystem::path metrics_path() const { return root_ / "metrics.csv"; }
  std::filesystem::path final_dir() const { return root_ / "final"; }

  /// Highest step with a checkpoint, if any.
  std::optional<std::size_t> latest_checkpoint() const;

  /// Rebuilds the state at `step` (latest when omitted). Throws IntegrityError naming
  /// the damaged file and IncompatibleVersion on a format mismatch.
  RunState restore(std::optional<std::size_t> step = std::nullopt) const;

  /// Drops data rows and checkpoints past `state.step` so an engine can continue from it.
  void rewind_to(const RunState& state) const;

  void on_start(const RunConfig& cfg, const RunState& state) override;
  void on_step(const RunConfig& cfg, const RunState& state, const StepDelta& delta) override;
  void on_finish(const RunConfig& cfg, const RunState& state) override;

 private:
  RunDirectory(std::filesystem::path root, RunConfig cfg) : root_(std::move(root)), cfg_(std::move(cfg)) {}
  void write_checkpoint_dir(const RunState& state) const;
  void append_metrics(const StepRecord& record) const;

  std::filesystem::path root_;
  RunConfig cfg_;
};

/// Writes params, optimizer, rng and state files for `state` into `dir`.
void write_state_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const RunState& state);

/// metrics.csv header and row rendering (win_rate and stderr blank off-waypoint).
std::string metrics_header();
std::string metrics_row(const RunConfig& cfg, const StepRecord& record);

}  // namespace apl

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apl/acquisition.hpp"
#include "apl/dpo.hpp"

namespace apl {

/// sigmoid(r(x, y1) - r(x, y2)). Throws InvalidInput on an architecture mismatch.
double bt_probability(const PolicyParams& params, const PolicyParams& ref, double beta, const TokenSequence& prompt,
                      const TokenSequence& y1, const TokenSequence& y2);

struct BTRecord {
  std::uint64_t pair_id = 0;
  double p = 0.5;        ///< probability the oracle-preferred completion wins under the implicit model
  bool correct = true;   ///< p >= 0.5
  int acquired_step = 0;
  Strategy strategy = Strategy::Random;
  std::uint64_t seed = 0;
};

BTRecord make_bt_record(std::uint64_t pair_id, double p, int acquired_step, Strategy strategy, std::uint64_t seed = 0);

/// Bin index for p over `bins` equal-width bins on [0, 1]; right-open except the last.
std::size_t histogram_bin(double p, std::size_t bins = 10);

struct Histogram {
  std::vector<std::size_t> counts;     ///< per bin
  std::vector<std::size_t> correct;    ///< per bin, records with p >= 0.5
  std::vector<std::size_t> incorrect;  ///< per bin, records with p < 0.5
  std::size_t total = 0;

  double lower_edge(std::size_t bin) const noexcept;
  std::size_t incorrect_mass() const noexcept;
};

Histogram build_histogram(std::span<const BTRecord> records, std::size_t bins = 10);

struct ConfidenceStats {
  Strategy strategy = Strategy::Random;
  std::size_t count = 0;
  double extremity = 0.0;                   ///< mean |p - 0.5|
  double fraction_incorrect = 0.0;          ///< p < 0.5
  double fraction_confidently_incorrect = 0.0;  ///< p < 0.1
};

ConfidenceStats confidence_stats(std::span<const BTRecord> records, Strategy strategy);
/// One entry per strategy present, in enum order. Needs records from at least two strategies.
std::vector<ConfidenceStats> acquisition_confidence_summary(std::span<const BTRecord> records);

enum class ScoringMode { AtAcquisition, Final };

/// BT records for every acquired pair of a run directory. In AtAcquisition mode a pair
/// from step t is scored with the step-(t-1) checkpoint, the model that selected it.
/// Pairs with identical completions are skipped.
std::vector<BTRecord> bt_records_from_run(const std::filesystem::path& run_dir,
                                          ScoringMode mode = ScoringMode::AtAcquisition);

struct MetricsRow {
  std::size_t step = 0;
  std::size_t dataset_size = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  std::optional<double> win_rate;
  std::optional<double> std_error;
  std::size_t label_calls = 0;
  std::size_t eval_calls = 0;
};

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct AggregateCell {
  std::string strategy;
  std::size_t waypoint = 0;
  std::size_t seeds = 0;                 ///< runs contributing a value
  std::size_t expected = 0;              ///< runs of this strategy
  double mean = 0.0;
  std::optional<double> std_error;       ///< sd / sqrt(n); absent for a single seed
  bool incomplete() const noexcept { return seeds < expected; }
};

/// Mean and standard error across seeds per (strategy, waypoint). Runs are grouped
/// by the strategy column of their metrics. `warnings` collects single-seed and
/// missing-waypoint notices.
std::vector<AggregateCell> aggregate_runs(std::span<const std::vector<MetricsRow>> runs,
                                          std::span<const std::size_t> waypoints,
                                          std::vector<std::string>* warnings = nullptr);

const AggregateCell* find_cell(std::span<const AggregateCell> cells, std::string_view strategy, std::size_t waypoint);

/// Plain-text table: one row per size, one column per strategy, cells "0.67 ± 0.012".
std::string format_results_table(std::span<const AggregateCell> cells);
std::string aggregate_csv(std::span<const AggregateCell> cells);
std::string histogram_csv(const Histogram& h);
std::string summary_csv(std::span<const ConfidenceStats> stats);
std::string histogram_svg(const Histogram& h, const std::string& title);
std::string winrate_svg(std::span<const AggregateCell> cells);

struct AnalysisReport {
  std::vector<AggregateCell> cells;
  std::vector<ConfidenceStats> confidence;
  std::vector<std::string> warnings;
};

struct AnalysisOptions {
  ScoringMode scoring = ScoringMode::AtAcquisition;
  int min_step = 2;  ///< BT histograms use pairs acquired at step >= min_step
};

/// Reads every run directory and writes histogram.csv, summary.csv, aggregate.csv,
/// table2-style.txt and figures/*.svg into `out_dir`.
AnalysisReport analyze_runs(std::span<const std::filesystem::path> run_dirs, const std::filesystem::path& out_dir,
                            const AnalysisOptions& options = {});

}  // namespace apl

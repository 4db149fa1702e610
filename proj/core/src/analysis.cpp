#include "apl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "apl/errors.hpp"
#include "apl/model_io.hpp"
#include "apl/preference_io.hpp"
#include "apl/run_directory.hpp"

namespace apl {

namespace fs = std::filesystem;

double bt_probability(const PolicyParams& params, const PolicyParams& ref, double beta, const TokenSequence& prompt,
                      const TokenSequence& y1, const TokenSequence& y2) {
  if (!(params.arch() == ref.arch())) throw InvalidInput("policy and reference architectures differ");
  const double d = implicit_reward(params, ref, beta, prompt, y1) - implicit_reward(params, ref, beta, prompt, y2);
  // 1 - p is exact for p in [0.5, 1], so swapping y1 and y2 gives an exact complement
  const double p = sigmoid(std::abs(d));
  return d >= 0.0 ? p : 1.0 - p;
}

BTRecord make_bt_record(std::uint64_t pair_id, double p, int acquired_step, Strategy strategy, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("BT probability outside [0, 1]");
  return {pair_id, p, p >= 0.5, acquired_step, strategy, seed};
}

std::size_t histogram_bin(double p, std::size_t bins) {
  if (bins < 1) throw InvalidInput("histogram needs at least one bin");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("probability outside [0, 1]");
  const auto b = static_cast<std::size_t>(std::floor(p * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

double Histogram::lower_edge(std::size_t bin) const noexcept {
  return static_cast<double>(bin) / static_cast<double>(counts.size());
}

std::size_t Histogram::incorrect_mass() const noexcept {
  std::size_t n = 0;
  for (auto c : incorrect) n += c;
  return n;
}

Histogram build_histogram(std::span<const BTRecord> records, std::size_t bins) {
  if (records.empty()) throw InvalidInput("histogram needs at least one record");
  Histogram h{std::vector<std::size_t>(bins, 0), std::vector<std::size_t>(bins, 0), std::vector<std::size_t>(bins, 0),
              records.size()};
  for (const auto& r : records) {
    const std::size_t b = histogram_bin(r.p, bins);
    ++h.counts[b];
    ++(r.p >= 0.5 ? h.correct : h.incorrect)[b];
  }
  return h;
}

ConfidenceStats confidence_stats(std::span<const BTRecord> records, Strategy strategy) {
  ConfidenceStats s;
  s.strategy = strategy;
  double extremity = 0.0;
  std::size_t incorrect = 0, confident = 0;
  for (const auto& r : records) {
    if (r.strategy != strategy) continue;
    ++s.count;
    extremity += std::abs(r.p - 0.5);
    if (r.p < 0.5) ++incorrect;
    if (r.p < 0.1) ++confident;
  }
  if (s.count > 0) {
    const double n = static_cast<double>(s.count);
    s.extremity = extremity / n;
    s.fraction_incorrect = static_cast<double>(incorrect) / n;
    s.fraction_confidently_incorrect = static_cast<double>(confident) / n;
  }
  return s;
}

std::vector<ConfidenceStats> acquisition_confidence_summary(std::span<const BTRecord> records) {
  std::set<Strategy> present;
  for (const auto& r : records) present.insert(r.strategy);
  if (present.size() < 2) throw InvalidInput("confidence summary needs records from at least two strategies");
  std::vector<ConfidenceStats> out;
  for (Strategy s : present) out.push_back(confidence_stats(records, s));
  return out;
}

std::vector<BTRecord> bt_records_from_run(const fs::path& run_dir, ScoringMode mode) {
  const RunDirectory dir = RunDirectory::open(run_dir);
  const RunConfig& cfg = dir.config();
  const auto pairs = read_preferences(dir.prefs_path());
  const PolicyParams reference = read_checkpoint(dir.checkpoint_dir(0) / "params.aplm");

  std::optional<PolicyParams> final_params;
  if (mode == ScoringMode::Final) {
    if (fs::exists(dir.final_dir() / "params.aplm")) {
      final_params = read_checkpoint(dir.final_dir() / "params.aplm");
    } else {
      const auto latest = dir.latest_checkpoint();
      if (!latest) throw IntegrityError("no checkpoint in " + run_dir.string());
      final_params = read_checkpoint(dir.checkpoint_dir(*latest) / "params.aplm");
    }
  }

  std::map<int, PolicyParams> by_step;
  std::vector<BTRecord> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pr = pairs[i];
    if (pr.chosen == pr.rejected) continue;
    const PolicyParams* scorer = nullptr;
    if (final_params) {
      scorer = &*final_params;
    } else {
      const int t = pr.acquired_step - 1;
      auto it = by_step.find(t);
      if (it == by_step.end())
        it = by_step.emplace(t, read_checkpoint(dir.checkpoint_dir(static_cast<std::size_t>(t)) / "params.aplm")).first;
      scorer = &it->second;
    }
    const double p = bt_probability(*scorer, reference, cfg.beta, pr.prompt, pr.chosen, pr.rejected);
    out.push_back(make_bt_record(i, p, pr.acquired_step, cfg.strategy, cfg.seed));
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

const std::vector<std::string> kStrategyOrder = {"random", "entropy", "certainty", "hybrid"};

std::vector<std::string> ordered_strategies(std::span<const AggregateCell> cells) {
  std::vector<std::string> out;
  for (const auto& s : kStrategyOrder)
    if (std::any_of(cells.begin(), cells.end(), [&](const auto& c) { return c.strategy == s; })) out.push_back(s);
  for (const auto& c : cells)
    if (std::find(out.begin(), out.end(), c.strategy) == out.end()) out.push_back(c.strategy);
  return out;
}

std::vector<std::size_t> ordered_waypoints(std::span<const AggregateCell> cells) {
  std::set<std::size_t> w;
  for (const auto& c : cells) w.insert(c.waypoint);
  return {w.begin(), w.end()};
}

std::string strategy_label(const std::string& s) {
  if (s == "random") return "Random";
  if (s == "entropy") return "Entropy";
  if (s == "certainty") return "Pref certainty";
  if (s == "hybrid") return "Pref + Ent";
  return s;
}

std::string strategy_colour(const std::string& s) {
  if (s == "random") return "#1f77b4";
  if (s == "entropy") return "#ff7f0e";
  if (s == "certainty") return "#2ca02c";
  if (s == "hybrid") return "#9467bd";
  return "#555555";
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_header())
    throw InvalidInput(path.string() + ": unexpected metrics header");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
    try {
      MetricsRow r;
      r.step = std::stoull(cells[0]);
      r.dataset_size = std::stoull(cells[1]);
      r.strategy = cells[2];
      r.seed = std::stoull(cells[3]);
      if (!cells[4].empty()) r.win_rate = std::stod(cells[4]);
      if (!cells[5].empty()) r.std_error = std::stod(cells[5]);
      r.label_calls = std::stoull(cells[6]);
      r.eval_calls = std::stoull(cells[7]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::vector<AggregateCell> aggregate_runs(std::span<const std::vector<MetricsRow>> runs,
                                          std::span<const std::size_t> waypoints, std::vector<std::string>* warnings) {
  // strategy -> list of runs (each run's rows)
  std::map<std::string, std::vector<const std::vector<MetricsRow>*>> groups;
  for (const auto& run : runs) {
    if (run.empty()) continue;
    groups[run.front().strategy].push_back(&run);
  }
  std::vector<AggregateCell> cells;
  for (const auto& [strategy, members] : groups) {
    if (members.size() < 2 && warnings)
      warnings->push_back("strategy " + strategy + " has a single seed; standard errors are n/a");
    for (std::size_t w : waypoints) {
      std::vector<double> values;
      for (const auto* run : members) {
        auto it = std::find_if(run->begin(), run->end(),
                               [&](const MetricsRow& r) { return r.dataset_size == w && r.win_rate; });
        if (it != run->end())
          values.push_back(*it->win_rate);
        else if (warnings)
          warnings->push_back("strategy " + strategy + " seed " + std::to_string(run->front().seed) +
                              " has no win rate at size " + std::to_string(w));
      }
      AggregateCell c;
      c.strategy = strategy;
      c.waypoint = w;
      c.seeds = values.size();
      c.expected = members.size();
      if (!values.empty()) {
        // sort so the floating-point sums do not depend on seed order
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (double v : values) sum += v;
        c.mean = sum / static_cast<double>(values.size());
        if (values.size() >= 2) {
          double ss = 0.0;
          for (double v : values) ss += (v - c.mean) * (v - c.mean);
          const double n = static_cast<double>(values.size());
          c.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        }
      }
      cells.push_back(c);
    }
  }
  return cells;
}

const AggregateCell* find_cell(std::span<const AggregateCell> cells, std::string_view strategy, std::size_t waypoint) {
  for (const auto& c : cells)
    if (c.strategy == strategy && c.waypoint == waypoint) return &c;
  return nullptr;
}

std::string format_results_table(std::span<const AggregateCell> cells) {
  const auto strategies = ordered_strategies(cells);
  const auto waypoints = ordered_waypoints(cells);
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Size"};
  for (const auto& s : strategies) header.push_back(strategy_label(s));
  grid.push_back(header);
  for (std::size_t w : waypoints) {
    std::vector<std::string> row{std::to_string(w)};
    for (const auto& s : strategies) {
      const auto* c = find_cell(cells, s, w);
      std::string text;
      if (!c || c->seeds == 0) {
        text = "missing";
      } else {
        text = fixed(c->mean, 2) + " ± " + (c->std_error ? fixed(*c->std_error, 3) : std::string("n/a"));
        if (c->incomplete()) text += " (incomplete)";
      }
      row.push_back(text);
    }
    grid.push_back(row);
  }
  // the plus-minus sign is two bytes in UTF-8 but one column wide
  const auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s)
      if ((ch & 0xC0) != 0x80) ++n;
    return n;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : grid)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width(row[i]));
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      os << grid[r][i];
      if (i + 1 < grid[r].size()) os << std::string(widths[i] - width(grid[r][i]) + 2, ' ');
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

std::string aggregate_csv(std::span<const AggregateCell> cells) {
  std::ostringstream os;
  os << "strategy,waypoint,seeds,expected,mean,stderr,incomplete\n";
  for (const auto& c : cells)
    os << c.strategy << ',' << c.waypoint << ',' << c.seeds << ',' << c.expected << ','
       << (c.seeds ? fixed(c.mean, 6) : "") << ',' << (c.std_error ? fixed(*c.std_error, 6) : "") << ','
       << (c.incomplete() ? "true" : "false") << '\n';
  return os.str();
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,count,correct,incorrect\n";
  const std::size_t bins = h.counts.size();
  for (std::size_t b = 0; b < bins; ++b)
    os << fixed(h.lower_edge(b), 1) << ',' << fixed(static_cast<double>(b + 1) / static_cast<double>(bins), 1) << ','
       << h.counts[b] << ',' << h.correct[b] << ',' << h.incorrect[b] << '\n';
  return os.str();
}

std::string summary_csv(std::span<const ConfidenceStats> stats) {
  std::ostringstream os;
  os << "strategy,count,extremity,fraction_incorrect,fraction_confidently_incorrect\n";
  for (const auto& s : stats)
    os << to_string(s.strategy) << ',' << s.count << ',' << fixed(s.extremity, 6) << ','
       << fixed(s.fraction_incorrect, 6) << ',' << fixed(s.fraction_confidently_incorrect, 6) << '\n';
  return os.str();
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  constexpr double W = 480, H = 300, left = 50, bottom = 40, top = 30;
  const std::size_t bins = h.counts.size();
  std::size_t peak = 1;
  for (auto c : h.counts) peak = std::max(peak, c);
  const double bar_w = (W - left - 20) / static_cast<double>(bins);
  const double plot_h = H - bottom - top;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  for (std::size_t b = 0; b < bins; ++b) {
    const double x = left + bar_w * static_cast<double>(b);
    const double bh = plot_h * static_cast<double>(h.counts[b]) / static_cast<double>(peak);
    const bool correct_bin = h.lower_edge(b) >= 0.5;
    os << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(H - bottom - bh, 1) << "\" width=\"" << fixed(bar_w - 2, 1)
       << "\" height=\"" << fixed(bh, 1) << "\" fill=\"" << (correct_bin ? "#2ca02c" : "#d62728") << "\"/>\n";
    os << "<text x=\"" << fixed(x + bar_w / 2, 1) << "\" y=\"" << H - bottom + 15
       << "\" text-anchor=\"middle\" font-size=\"10\">" << fixed(h.lower_edge(b), 1) << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - 20 << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n</svg>\n";
  return os.str();
}

std::string winrate_svg(std::span<const AggregateCell> cells) {
  constexpr double W = 480, H = 300, left = 50, right = 120, bottom = 40, top = 20;
  const auto strategies = ordered_strategies(cells);
  const auto waypoints = ordered_waypoints(cells);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  if (waypoints.empty()) {
    os << "</svg>\n";
    return os.str();
  }
  const double x_max = static_cast<double>(std::max<std::size_t>(waypoints.back(), 1));
  const auto px = [&](std::size_t w) { return left + (W - left - right) * static_cast<double>(w) / x_max; };
  const auto py = [&](double r) { return H - bottom - (H - bottom - top) * r; };
  os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << W - right << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << py(0.5) << "\" x2=\"" << W - right << "\" y2=\"" << py(0.5)
     << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t w : waypoints)
    os << "<text x=\"" << fixed(px(w), 1) << "\" y=\"" << H - bottom + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << w << "</text>\n";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const auto& s = strategies[i];
    std::ostringstream pts;
    for (std::size_t w : waypoints)
      if (const auto* c = find_cell(cells, s, w); c && c->seeds > 0) pts << fixed(px(w), 1) << ',' << fixed(py(c->mean), 1) << ' ';
    os << "<polyline fill=\"none\" stroke=\"" << strategy_colour(s) << "\" stroke-width=\"2\" points=\"" << pts.str()
       << "\"/>\n";
    os << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 16 * (i + 1) << "\" font-size=\"11\" fill=\""
       << strategy_colour(s) << "\">" << strategy_label(s) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

AnalysisReport analyze_runs(std::span<const fs::path> run_dirs, const fs::path& out_dir, const AnalysisOptions& options) {
  if (run_dirs.empty()) throw InvalidInput("no run directories given");
  AnalysisReport report;
  std::vector<std::vector<MetricsRow>> metrics;
  std::set<std::size_t> waypoints;
  std::vector<BTRecord> records;
  for (const auto& dir : run_dirs) {
    const RunDirectory run = RunDirectory::open(dir);
    metrics.push_back(read_metrics(run.metrics_path()));
    for (std::size_t w : run.config().eval_waypoints) waypoints.insert(w);
    for (auto& r : bt_records_from_run(dir, options.scoring))
      if (r.acquired_step >= options.min_step) records.push_back(r);
  }
  const std::vector<std::size_t> wp(waypoints.begin(), waypoints.end());
  report.cells = aggregate_runs(metrics, wp, &report.warnings);

  fs::create_directories(out_dir / "figures");
  write_file(out_dir / "table2-style.txt", format_results_table(report.cells));
  write_file(out_dir / "aggregate.csv", aggregate_csv(report.cells));
  write_file(out_dir / "figures" / "winrate.svg", winrate_svg(report.cells));

  std::set<Strategy> strategies;
  for (const auto& r : records) strategies.insert(r.strategy);
  std::ostringstream hist_csv;
  hist_csv << "strategy,bin_lower,bin_upper,count,correct,incorrect\n";
  for (Strategy s : strategies) {
    std::vector<BTRecord> subset;
    for (const auto& r : records)
      if (r.strategy == s) subset.push_back(r);
    const Histogram h = build_histogram(subset);
    std::istringstream rows(histogram_csv(h));
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) hist_csv << to_string(s) << ',' << line << '\n';
    write_file(out_dir / "figures" / ("histogram-" + std::string(to_string(s)) + ".svg"),
               histogram_svg(h, "BT probability of the preferred completion (" + std::string(to_string(s)) + ")"));
  }
  write_file(out_dir / "histogram.csv", hist_csv.str());

  for (Strategy s : strategies) report.confidence.push_back(confidence_stats(records, s));
  write_file(out_dir / "summary.csv", summary_csv(report.confidence));
  return report;
}

}  // namespace apl

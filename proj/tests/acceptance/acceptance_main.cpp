// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   apl_acceptance [--work DIR] [--keep]
//
// The experiment criteria train on the synthetic valence task; their run
// directories and an analysis report land in DIR.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../unit/support.hpp"
#include "apl/acquisition.hpp"
#include "apl/analysis.hpp"
#include "apl/engine.hpp"
#include "apl/oracle.hpp"
#include "apl/run_directory.hpp"
#include "apl/synthetic.hpp"
#include "apl/templates.hpp"
#include "apl/valence.hpp"

namespace fs = std::filesystem;
using namespace apl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o, double seconds) {
  std::printf("%s  %-28s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !o.pass;
}

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  report(name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<PreferencePair> random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> tok(2, 7);
  std::uniform_int_distribution<int> len(1, 3);
  const auto draw = [&](bool eos) {
    TokenSequence s;
    for (int i = len(rng); i > 0; --i) s.tokens.push_back(tok(rng));
    if (eos) {
      s.tokens.push_back(kEos);
      s.terminated = true;
    }
    return s;
  };
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({draw(false), draw(true), draw(true), 1, {}, {}});
  return out;
}

// ---- closed-form criteria ----

Outcome dpo_identity() {
  double worst_loss = 0.0, worst_w = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = testing::random_params(testing::tiny_arch(), s, 1.0);
    const auto batch = random_pairs(16, 100 + s);
    worst_loss = std::max(worst_loss, std::abs(dpo_loss(p, p, 0.2, batch) - std::log(2.0)));
    for (double w : dpo_weights(p, p, 0.2, batch)) worst_w = std::max(worst_w, std::abs(w - 0.5));
  }
  return {worst_loss <= 1e-9 && worst_w <= 1e-12, fmt("|loss - ln 2| %.1e, |w - 0.5| %.1e", worst_loss, worst_w)};
}

Outcome gradient_correctness() {
  const auto arch = testing::tiny_arch();
  const auto cur = testing::random_params(arch, 8), ref = testing::random_params(arch, 9);
  const auto batch = random_pairs(6, 3);
  const double h = 1e-5;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, cur.size() - 1);
  const auto rel = [](double fd, double g) { return std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6}); };

  const auto g = dpo_grad(cur, ref, 0.2, batch);
  const auto& pr = batch.front();
  const auto gl = grad_logprob(cur, pr.prompt, pr.chosen);
  double worst_dpo = 0.0, worst_lp = 0.0;
  for (int trial = 0; trial < 128; ++trial) {
    const std::size_t i = pick(rng);
    auto plus = cur.values(), minus = cur.values();
    plus[i] += h;
    minus[i] -= h;
    const PolicyParams pp(arch, plus), pm(arch, minus);
    worst_dpo = std::max(worst_dpo, rel((dpo_loss(pp, ref, 0.2, batch) - dpo_loss(pm, ref, 0.2, batch)) / (2 * h), g[i]));
    worst_lp = std::max(worst_lp,
                        rel((logprob(pp, pr.prompt, pr.chosen) - logprob(pm, pr.prompt, pr.chosen)) / (2 * h), gl[i]));
  }
  const auto gw = dpo_grad_weighted(cur, ref, 0.2, batch);
  double forms = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) forms = std::max(forms, std::abs(g[i] - gw[i]));
  return {worst_dpo <= 1e-4 && worst_lp <= 1e-4 && forms <= 1e-10,
          fmt("fd rel err dpo %.1e logprob %.1e, backprop vs weighted %.1e", worst_dpo, worst_lp, forms)};
}

Outcome entropy_calibration() {
  const auto arch = testing::tiny_arch();
  double worst = 0.0;
  for (std::uint64_t s : {21, 22, 23, 24}) {
    const auto p = testing::random_params(arch, s, 1.0);
    const auto prompt = testing::seq({3, 4});
    const double exact = testing::exact_entropy(p, prompt, 2);
    worst = std::max(worst, std::abs(predictive_entropy(p, prompt, 10000, 1.0, s, 2) - exact));
  }
  std::vector<double> bias(arch.vocab_size, -1000.0);
  bias[kEos] = 0.0;
  const auto det = testing::bias_only_params(arch, bias);
  const double h0 = predictive_entropy(det, testing::seq({3}), 64, 1.0, 5, 2);
  return {worst <= 0.05 && h0 == 0.0, fmt("max |estimate - exact| %.4f, deterministic model %.1f", worst, h0)};
}

Outcome bt_identities() {
  const auto arch = testing::tiny_arch();
  const auto p = testing::random_params(arch, 50, 1.0), ref = testing::random_params(arch, 51, 1.0);
  std::size_t checked = 0, bad = 0;
  for (const auto& pr : random_pairs(500, 52)) {
    const auto &x = pr.prompt, &a = pr.chosen, &b = pr.rejected;
    bad += bt_probability(ref, ref, 0.2, x, a, b) != 0.5;
    bad += bt_probability(p, ref, 0.2, x, a, b) + bt_probability(p, ref, 0.2, x, b, a) != 1.0;
    bad += preference_certainty(ref, ref, 0.2, x, a, b) != 0.0;
    checked += 3;
  }
  return {bad == 0, fmt("%zu of %zu identities exact", checked - bad, checked)};
}

Outcome oracle_machinery(const synthetic::Task& task, const PolicyParams& theta0, const fs::path& golden_dir) {
  ValenceOracle oracle(task.valence, ValenceRules::with_grammar_proxy());
  const PresentationContext ctx{&task.vocab};
  std::vector<Comparison> pairs;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& x = task.test_prompts[i];
    pairs.push_back({i, x, sample(theta0, x, {0.7, 8, 2 * i}), sample(theta0, x, {0.7, 8, 2 * i + 1})});
  }
  const auto cons = consistency_check(oracle, pairs, 5, 3, ctx);

  // the raw slot choice must demap to the completion the oracle scores higher
  std::size_t mismatches = 0, swapped = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto& c = pairs[s % pairs.size()];
    const auto j = label(oracle, c, derive_seed(99, "order", s), ctx);
    swapped += j.presented_order.swapped;
    mismatches += j.winner != valence_compare(task.valence, c.y1, c.y2, oracle.rules());
    if (!j.degenerate) mismatches += demap(j.raw_choice, j.presented_order) != j.winner;
  }

  std::size_t golden_ok = 0;
  for (TemplateId id : {TemplateId::Sentiment, TemplateId::Summarization}) {
    const std::string name(to_string(id));
    const auto r = render_template(id, "the movie was", "great fun", "boring and bad");
    golden_ok += r.system == slurp(golden_dir / (name + ".system.golden"));
    golden_ok += r.user == slurp(golden_dir / (name + ".user.golden"));
  }
  const bool both_coins = swapped > 0 && swapped < 10000;
  return {cons.consistency == 1.0 && cons.failed == 0 && mismatches == 0 && both_coins && golden_ok == 4,
          fmt("consistency %.3f, demap mismatches %zu (%zu/10000 swapped), goldens %zu/4", cons.consistency,
              mismatches, swapped, golden_ok)};
}

// ---- experiments ----

struct Lab {
  synthetic::Task task;
  PolicyParams theta0;
  PromptPools pools;
  fs::path work;

  RunState run_to(const RunConfig& cfg, const fs::path& dir) const {
    fs::remove_all(dir);
    auto sink = RunDirectory::create(dir, cfg);
    ValenceOracle oracle(task.valence, cfg.oracle_grammar_proxy ? ValenceRules::with_grammar_proxy() : ValenceRules{});
    return run(cfg, theta0, pools, oracle, PresentationContext{&task.vocab}, &sink);
  }
};

RunConfig headline_config(Strategy s, std::uint64_t seed) {
  RunConfig c;
  c.budget = 512;
  c.batch = 64;
  c.pool = 256;
  c.mc_samples = 8;
  c.beta = 0.2;
  c.oracle_grammar_proxy = true;
  c.dpo.lr = 5e-5;
  c.eval_waypoints = {0, 64, 128, 256, 512};
  c.strategy = s;
  c.seed = seed;
  return c;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5, 6, 7, 8, 9};

struct Headline {
  std::map<Strategy, std::vector<fs::path>> dirs;
  std::map<Strategy, std::vector<RunState>> states;
  AnalysisReport report;
};

double pooled_se(const AggregateCell& a, const AggregateCell& b) {
  return std::hypot(a.std_error.value_or(0.0), b.std_error.value_or(0.0));
}

Outcome headline_winrate(const Headline& h) {
  const auto& cells = h.report.cells;
  std::string detail;
  bool ok = true;
  for (std::size_t w : {128u, 256u, 512u}) {
    const auto *c = find_cell(cells, "certainty", w), *r = find_cell(cells, "random", w);
    if (!c || !r || c->incomplete() || r->incomplete()) return {false, fmt("waypoint %zu missing", w)};
    const double se = pooled_se(*c, *r);
    ok = ok && c->mean > r->mean - se;
    if (w == 512) ok = ok && c->mean - r->mean >= 0.0;
    detail += fmt("%zu: %.3f vs %.3f (se %.3f); ", w, c->mean, r->mean, se);
  }
  std::size_t wins = 0, n = 0;
  for (const auto& [s, states] : h.states)
    for (const auto& st : states) {
      wins += st.history.front().eval->wins;
      n += st.history.front().eval->evaluated;
    }
  const double rate = static_cast<double>(wins) / static_cast<double>(n);
  const double se0 = std::sqrt(0.25 / static_cast<double>(n));
  ok = ok && std::abs(rate - 0.5) <= 3.0 * se0;
  detail += fmt("step 0: %.4f over %zu (3se %.4f)", rate, n, 3.0 * se0);
  return {ok, detail};
}

Outcome headline_extremity(const Headline& h) {
  const auto extremity = [](const fs::path& dir) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : bt_records_from_run(dir))
      if (r.acquired_step >= 2) {
        sum += std::abs(r.p - 0.5);
        ++n;
      }
    return n ? sum / static_cast<double>(n) : 0.0;
  };
  std::size_t better = 0;
  double mc = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    const double c = extremity(h.dirs.at(Strategy::Certainty)[i]), r = extremity(h.dirs.at(Strategy::Random)[i]);
    better += c > r;
    mc += c / static_cast<double>(kSeeds.size());
    mr += r / static_cast<double>(kSeeds.size());
  }
  return {better >= 7, fmt("certainty more extreme on %zu/9 seeds (mean %.4f vs %.4f)", better, mc, mr)};
}

Outcome headline_accounting(const Headline& h) {
  std::size_t runs = 0, bad = 0;
  for (const auto& [s, states] : h.states)
    for (const auto& st : states) {
      ++runs;
      bad += st.step != 8 || st.total_steps != 8 || st.counters.label_calls != 512 || st.dataset.size() != 512;
      for (const auto& rec : st.history) bad += rec.dataset_size != 64 * rec.step || rec.label_calls != 64 * rec.step;
    }
  return {runs == 18 && bad == 0, fmt("%zu runs: 8 steps, 512 labeling calls, |D| = 64 t; %zu violations", runs, bad)};
}

Outcome online_variant(const Lab& lab) {
  std::vector<std::vector<MetricsRow>> metrics;
  for (Strategy s : {Strategy::Random, Strategy::Certainty})
    for (std::uint64_t seed : {1, 2, 3}) {
      auto cfg = headline_config(s, seed);
      cfg.mode = FinetuneMode::Online;
      cfg.dpo.lr = 1e-3;
      cfg.eval_waypoints = {512};
      const auto dir = lab.work / "online" / (std::string(to_string(s)) + "-" + std::to_string(seed));
      lab.run_to(cfg, dir);
      metrics.push_back(read_metrics(dir / "metrics.csv"));
    }
  const std::vector<std::size_t> wp{512};
  const auto cells = aggregate_runs(metrics, wp);
  const auto *c = find_cell(cells, "certainty", 512), *r = find_cell(cells, "random", 512);
  const double se = pooled_se(*c, *r);
  return {c->mean >= r->mean - se, fmt("final %.3f vs %.3f (pooled se %.3f)", c->mean, r->mean, se)};
}

Outcome reproducibility(const Lab& lab, const Headline& h) {
  const auto original = h.dirs.at(Strategy::Certainty).front();
  const auto again = lab.work / "repeat";
  lab.run_to(headline_config(Strategy::Certainty, kSeeds.front()), again);
  bool same = true;
  for (const char* f : {"metrics.csv", "prefs.jsonl", "judgements.jsonl"})
    same = same && slurp(original / f) == slurp(again / f);
  return {same, same ? "metrics.csv, prefs.jsonl and judgements.jsonl byte-identical" : "files differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "apl-acceptance";
  fs::path golden = APL_GOLDEN_DIR;
  bool keep = false;
  app.add_option("--work", work, "Directory for experiment runs")->capture_default_str();
  app.add_option("--golden", golden, "Template golden files")->capture_default_str();
  app.add_flag("--keep", keep, "Keep the work directory");
  CLI11_PARSE(app, argc, argv);

  criterion("dpo-identity", dpo_identity);
  criterion("gradient-correctness", gradient_correctness);
  criterion("entropy-calibration", entropy_calibration);
  criterion("bt-identities", bt_identities);

  fs::remove_all(work);
  fs::create_directories(work);
  synthetic::TaskConfig tc;
  tc.seed = 1;
  auto task = synthetic::generate_task(tc);
  PretrainConfig pc;
  pc.seed = 1;
  auto theta0 = pretrain(Architecture{}, task.corpus, pc);
  Lab lab{std::move(task), std::move(theta0), {}, work};
  lab.pools.train = lab.task.train_prompts;
  lab.pools.test = lab.task.test_prompts;

  criterion("oracle-machinery", [&] { return oracle_machinery(lab.task, lab.theta0, golden); });

  Headline h;
  std::vector<fs::path> all_dirs;
  const auto t0 = std::chrono::steady_clock::now();
  for (Strategy s : {Strategy::Random, Strategy::Certainty})
    for (std::uint64_t seed : kSeeds) {
      const auto dir = work / "headline" / (std::string(to_string(s)) + "-" + std::to_string(seed));
      h.states[s].push_back(lab.run_to(headline_config(s, seed), dir));
      h.dirs[s].push_back(dir);
      all_dirs.push_back(dir);
    }
  h.report = analyze_runs(all_dirs, work / "report");
  std::printf("      headline experiment: 18 runs in %.0fs, report in %s\n",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
              (work / "report").string().c_str());

  criterion("headline-winrate", [&] { return headline_winrate(h); });
  criterion("confident-mistakes", [&] { return headline_extremity(h); });
  criterion("loop-accounting", [&] { return headline_accounting(h); });
  criterion("online-variant", [&] { return online_variant(lab); });
  criterion("reproducibility", [&] { return reproducibility(lab, h); });

  std::printf("%d criteria failed\n", failures);
  if (!keep && failures == 0) fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}

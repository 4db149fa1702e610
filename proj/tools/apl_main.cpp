// apl: command-line front end for the active preference learning lab.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apl/analysis.hpp"
#include "apl/engine.hpp"
#include "apl/errors.hpp"
#include "apl/human_queue.hpp"
#include "apl/llm_judge.hpp"
#include "apl/model_io.hpp"
#include "apl/run_directory.hpp"
#include "apl/service.hpp"
#include "apl/synthetic.hpp"
#include "apl/valence.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct DataFiles {
  fs::path dir;
  fs::path vocab() const { return dir / "vocab.txt"; }
  fs::path valence() const { return dir / "valence.json"; }
  fs::path corpus() const { return dir / "corpus.txt"; }
  fs::path train() const { return dir / "train_prompts.txt"; }
  fs::path test() const { return dir / "test_prompts.txt"; }
  fs::path base() const { return dir / "base.aplm"; }
};

struct OracleChoice {
  std::unique_ptr<apl::Oracle> oracle;
  std::shared_ptr<apl::HumanQueue> queue;
};

OracleChoice make_oracle(const std::string& kind, const apl::RunConfig& cfg, const DataFiles& data) {
  OracleChoice out;
  if (kind == "valence") {
    const auto rules = cfg.oracle_grammar_proxy ? apl::ValenceRules::with_grammar_proxy() : apl::ValenceRules{};
    out.oracle = std::make_unique<apl::ValenceOracle>(apl::ValenceTable::load(data.valence()), rules);
  } else if (kind == "llm") {
    if (cfg.judge.base_url.empty()) throw apl::ConfigError("judge.base_url", "required for the llm oracle");
    apl::JudgeEndpoint ep;
    ep.base_url = cfg.judge.base_url;
    ep.path = cfg.judge.path;
    ep.model = cfg.judge.model;
    ep.max_in_flight = cfg.judge.max_in_flight;
    out.oracle = std::make_unique<apl::LlmJudge>(ep, apl::make_http_transport(ep.base_url));
  } else if (kind == "human") {
    out.queue = std::make_shared<apl::HumanQueue>();
    out.oracle = std::make_unique<apl::HumanOracle>(out.queue);
  } else {
    throw apl::ConfigError("oracle", "unknown oracle '" + kind + "'");
  }
  return out;
}

std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---- gen-data ----

struct GenDataArgs {
  fs::path out = "data";
  apl::synthetic::TaskConfig task;
};

int cmd_gen_data(const GenDataArgs& a) {
  const auto task = apl::synthetic::generate_task(a.task);
  fs::create_directories(a.out);
  const DataFiles files{a.out};
  apl::write_vocabulary(files.vocab(), task.vocab);
  task.valence.save(files.valence());
  apl::write_corpus(files.corpus(), task.vocab, task.corpus);
  apl::write_corpus(files.train(), task.vocab, task.train_prompts);
  apl::write_corpus(files.test(), task.vocab, task.test_prompts);
  std::cout << "wrote " << task.corpus.size() << " corpus lines, " << task.train_prompts.size() << " train and "
            << task.test_prompts.size() << " test prompts to " << a.out.string() << "\n";
  return 0;
}

// ---- pretrain ----

struct PretrainArgs {
  fs::path data = "data";
  std::optional<fs::path> out;
  apl::Architecture arch;
  apl::PretrainConfig cfg;
};

int cmd_pretrain(const PretrainArgs& a) {
  const DataFiles files{a.data};
  const auto vocab = apl::read_vocabulary(files.vocab());
  auto arch = a.arch;
  arch.vocab_size = static_cast<std::uint32_t>(vocab.size());
  arch.validate();
  const auto corpus = apl::read_corpus(files.corpus(), vocab);
  const auto params = apl::pretrain(arch, corpus, a.cfg);
  const fs::path out = a.out.value_or(files.base());
  apl::write_checkpoint(out, params);
  std::cout << "corpus nll " << format_rate(apl::corpus_nll(params, corpus)) << ", " << params.size()
            << " parameters written to " << out.string() << "\n";
  return 0;
}

// ---- run / serve ----

struct RunArgs {
  std::optional<fs::path> config;
  std::optional<std::string> strategy;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> batch;
  std::string oracle = "valence";
  fs::path out;
  fs::path data = "data";
  std::optional<fs::path> base;
  bool resume = false;
  std::string addr = "127.0.0.1";
  int port = 8321;
  bool allow_external = false;
};

apl::RunConfig merged_config(const RunArgs& a) {
  apl::RunConfig cfg = a.config ? apl::load_run_config(*a.config) : apl::RunConfig{};
  const auto wrap = [](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const apl::InvalidInput& e) {
      throw apl::ConfigError(field, e.what());
    }
  };
  if (a.strategy) wrap("strategy", [&] { cfg.strategy = apl::parse_strategy(*a.strategy); });
  if (a.mode) wrap("mode", [&] { cfg.mode = apl::parse_mode(*a.mode); });
  if (a.seed) cfg.seed = *a.seed;
  if (a.budget) cfg.budget = *a.budget;
  if (a.batch) cfg.batch = *a.batch;
  cfg.dpo.beta = cfg.beta;
  cfg.validate();
  return cfg;
}

int cmd_run(const RunArgs& a) {
  std::optional<apl::RunDirectory> dir;
  std::optional<apl::RunState> restored;
  apl::RunConfig cfg;
  if (a.resume) {
    dir = apl::RunDirectory::open(a.out);
    cfg = dir->config();
    restored = dir->restore();
    dir->rewind_to(*restored);
  } else {
    cfg = merged_config(a);
  }

  const DataFiles files{a.data};
  const auto vocab = apl::read_vocabulary(files.vocab());
  apl::PromptPools pools;
  pools.train = apl::read_corpus(files.train(), vocab);
  pools.test = apl::read_corpus(files.test(), vocab);

  auto choice = make_oracle(a.oracle, cfg, files);
  const apl::PresentationContext ctx{&vocab, cfg.judge.template_id, cfg.oracle_temperature};
  std::unique_ptr<apl::Engine> engine;
  if (restored) {
    engine = std::make_unique<apl::Engine>(cfg, std::move(*restored), pools, *choice.oracle, ctx);
  } else {
    auto theta0 = apl::read_checkpoint(a.base.value_or(files.base()));
    engine = std::make_unique<apl::Engine>(cfg, std::move(theta0), pools, *choice.oracle, ctx);
    dir = apl::RunDirectory::create(a.out, cfg);
  }
  engine->add_sink(&*dir);

  auto monitor = std::make_shared<apl::RunMonitor>();
  engine->add_sink(monitor.get());
  std::unique_ptr<apl::ApiServer> server;
  if (choice.queue) {
    auto opts = apl::ApiOptions::from_env();
    opts.host = a.addr;
    opts.port = a.port;
    opts.allow_external = a.allow_external;
    server = std::make_unique<apl::ApiServer>(choice.queue, monitor, opts);
    const int port = server->start();
    std::cerr << "apl: serving http://" << a.addr << ":" << port << "/api\n";
    monitor->publish(cfg, engine->state());
  }

  const auto& state = engine->run();
  std::cout << "run finished after " << state.step << " steps, " << state.dataset.size() << " pairs, "
            << state.counters.label_calls << " labeling calls\n";
  for (const auto& r : state.history)
    if (r.eval)
      std::cout << "  size " << r.dataset_size << ": win rate " << format_rate(r.eval->rate) << " ± "
                << format_rate(r.eval->std_error) << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  fs::path checkpoint;
  std::optional<fs::path> baseline;
  fs::path data = "data";
  std::string oracle = "valence";
  std::optional<fs::path> config;
  std::size_t prompts = 512;
  double temperature = 0.25;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const DataFiles files{a.data};
  const apl::RunConfig cfg = a.config ? apl::load_run_config(*a.config) : apl::RunConfig{};
  const auto vocab = apl::read_vocabulary(files.vocab());
  const auto test = apl::read_corpus(files.test(), vocab);
  const auto params = apl::read_checkpoint(a.checkpoint);
  const auto baseline = apl::read_checkpoint(a.baseline.value_or(files.base()));
  auto choice = make_oracle(a.oracle, cfg, files);
  if (choice.queue) throw apl::ConfigError("oracle", "eval does not support the human oracle");
  const apl::PresentationContext ctx{&vocab, cfg.judge.template_id, cfg.oracle_temperature};
  apl::EvalOptions opts;
  opts.temperature = a.temperature;
  opts.max_tokens = cfg.max_completion_tokens;
  opts.seed = a.seed;
  const std::size_t n = std::min(a.prompts, test.size());
  const auto w = apl::evaluate_winrate(params, baseline, std::span(test).first(n), *choice.oracle, ctx, opts);
  std::cout << json{{"win_rate", w.rate}, {"stderr", w.std_error}, {"wins", w.wins}, {"evaluated", w.evaluated},
                    {"failed", w.failed}}
                   .dump()
            << "\n";
  return 0;
}

// ---- consistency ----

struct ConsistencyArgs {
  fs::path data = "data";
  std::optional<fs::path> base;
  std::string oracle = "valence";
  std::optional<fs::path> config;
  std::size_t pairs = 100;
  std::size_t repeats = 2;
  std::uint64_t seed = 0;
};

int cmd_consistency(const ConsistencyArgs& a) {
  const DataFiles files{a.data};
  const apl::RunConfig cfg = a.config ? apl::load_run_config(*a.config) : apl::RunConfig{};
  const auto vocab = apl::read_vocabulary(files.vocab());
  const auto test = apl::read_corpus(files.test(), vocab);
  const auto params = apl::read_checkpoint(a.base.value_or(files.base()));
  auto choice = make_oracle(a.oracle, cfg, files);
  if (choice.queue) throw apl::ConfigError("oracle", "consistency does not support the human oracle");

  std::vector<apl::Comparison> pairs;
  for (std::size_t i = 0; i < std::min(a.pairs, test.size()); ++i) {
    const apl::SamplingConfig s1{cfg.gen_temperature, cfg.max_completion_tokens, apl::derive_seed(a.seed, "y", i, 0)};
    const apl::SamplingConfig s2{cfg.gen_temperature, cfg.max_completion_tokens, apl::derive_seed(a.seed, "y", i, 1)};
    pairs.push_back({i, test[i], apl::sample(params, test[i], s1), apl::sample(params, test[i], s2)});
  }
  const apl::PresentationContext ctx{&vocab, cfg.judge.template_id, cfg.oracle_temperature};
  const auto r = apl::consistency_check(*choice.oracle, pairs, a.repeats, a.seed, ctx);
  std::cout << json{{"consistency", r.consistency}, {"evaluated", r.evaluated}, {"failed", r.failed}}.dump() << "\n";
  return 0;
}

// ---- analyze ----

struct AnalyzeArgs {
  std::vector<fs::path> runs;
  fs::path out = "analysis";
  std::string scoring = "acquisition";
  int min_step = 2;
};

int cmd_analyze(const AnalyzeArgs& a) {
  apl::AnalysisOptions opts;
  if (a.scoring == "acquisition")
    opts.scoring = apl::ScoringMode::AtAcquisition;
  else if (a.scoring == "final")
    opts.scoring = apl::ScoringMode::Final;
  else
    throw apl::ConfigError("scoring", "must be acquisition or final");
  opts.min_step = a.min_step;
  const auto report = apl::analyze_runs(a.runs, a.out, opts);
  for (const auto& w : report.warnings) std::cerr << "apl: warning: " << w << "\n";
  std::cout << apl::format_results_table(report.cells);
  for (const auto& c : report.confidence)
    std::cout << apl::to_string(c.strategy) << ": extremity " << format_rate(c.extremity) << ", incorrect "
              << format_rate(c.fraction_incorrect) << ", confidently incorrect "
              << format_rate(c.fraction_confidently_incorrect) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active preference learning lab"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic valence corpus and prompt pools");
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();
  gen_cmd->add_option("--seed", gen.task.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--corpus-size", gen.task.corpus_size)->capture_default_str();
  gen_cmd->add_option("--train-prompts", gen.task.train_prompts)->capture_default_str();
  gen_cmd->add_option("--test-prompts", gen.task.test_prompts)->capture_default_str();

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Fit the base policy to the corpus by maximum likelihood");
  pre_cmd->add_option("--data", pre.data, "Data directory from gen-data")->capture_default_str();
  pre_cmd->add_option("--out", pre.out, "Checkpoint path (default <data>/base.aplm)");
  pre_cmd->add_option("--context", pre.arch.context)->capture_default_str();
  pre_cmd->add_option("--embed", pre.arch.embed)->capture_default_str();
  pre_cmd->add_option("--hidden", pre.arch.hidden)->capture_default_str();
  pre_cmd->add_option("--epochs", pre.cfg.epochs)->capture_default_str();
  pre_cmd->add_option("--lr", pre.cfg.lr)->capture_default_str();
  pre_cmd->add_option("--minibatch", pre.cfg.minibatch)->capture_default_str();
  pre_cmd->add_option("--seed", pre.cfg.seed)->capture_default_str();

  RunArgs run;
  const auto add_run_options = [&run](CLI::App* cmd) {
    cmd->add_option("--config", run.config, "RunConfig JSON; flags override it");
    cmd->add_option("--strategy", run.strategy, "random | entropy | certainty | hybrid");
    cmd->add_option("--seed", run.seed);
    cmd->add_option("--mode", run.mode, "reset | online");
    cmd->add_option("--budget", run.budget);
    cmd->add_option("--batch", run.batch);
    cmd->add_option("--oracle", run.oracle, "valence | llm | human")->capture_default_str();
    cmd->add_option("--out", run.out, "Run directory")->required();
    cmd->add_option("--data", run.data, "Data directory")->capture_default_str();
    cmd->add_option("--base", run.base, "Base checkpoint (default <data>/base.aplm)");
    cmd->add_flag("--resume", run.resume, "Continue the run in --out from its latest checkpoint");
    cmd->add_option("--addr", run.addr, "API bind address (human oracle)")->capture_default_str();
    cmd->add_option("--port", run.port, "API port (human oracle; 0 picks one)")->capture_default_str();
    cmd->add_flag("--allow-external", run.allow_external, "Permit binding a non-loopback address");
  };
  auto* run_cmd = app.add_subcommand("run", "Run active preference learning into a run directory");
  auto* serve_cmd = app.add_subcommand("serve", "Run with the human oracle behind the HTTP API");
  add_run_options(run_cmd);
  add_run_options(serve_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Win rate of a checkpoint against a baseline");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--baseline", ev.baseline, "Baseline checkpoint (default <data>/base.aplm)");
  eval_cmd->add_option("--data", ev.data)->capture_default_str();
  eval_cmd->add_option("--oracle", ev.oracle, "valence | llm")->capture_default_str();
  eval_cmd->add_option("--config", ev.config, "RunConfig JSON for judge settings");
  eval_cmd->add_option("--prompts", ev.prompts)->capture_default_str();
  eval_cmd->add_option("--temperature", ev.temperature)->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed)->capture_default_str();

  ConsistencyArgs cons;
  auto* cons_cmd = app.add_subcommand("consistency", "Oracle self-consistency under order randomization");
  cons_cmd->add_option("--data", cons.data)->capture_default_str();
  cons_cmd->add_option("--base", cons.base);
  cons_cmd->add_option("--oracle", cons.oracle, "valence | llm")->capture_default_str();
  cons_cmd->add_option("--config", cons.config);
  cons_cmd->add_option("--pairs", cons.pairs)->capture_default_str();
  cons_cmd->add_option("--repeats", cons.repeats)->capture_default_str();
  cons_cmd->add_option("--seed", cons.seed)->capture_default_str();

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Histograms and results tables over run directories");
  an_cmd->add_option("runs", an.runs, "Run directories")->required()->check(CLI::ExistingDirectory);
  an_cmd->add_option("--out", an.out)->capture_default_str();
  an_cmd->add_option("--scoring", an.scoring, "acquisition | final")->capture_default_str();
  an_cmd->add_option("--min-step", an.min_step)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "apl: error: usage: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*pre_cmd) return cmd_pretrain(pre);
    if (*run_cmd) return cmd_run(run);
    if (*serve_cmd) {
      run.oracle = "human";
      return cmd_run(run);
    }
    if (*eval_cmd) return cmd_eval(ev);
    if (*cons_cmd) return cmd_consistency(cons);
    if (*an_cmd) return cmd_analyze(an);
  } catch (const apl::Error& e) {
    std::cerr << "apl: error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "apl: error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "apl/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "apl/errors.hpp"

namespace apl {

using json = nlohmann::json;

std::string_view to_string(FinetuneMode m) noexcept { return m == FinetuneMode::Reset ? "reset" : "online"; }

FinetuneMode parse_mode(std::string_view name) {
  if (name == "reset") return FinetuneMode::Reset;
  if (name == "online") return FinetuneMode::Online;
  throw InvalidInput("unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(EvalBaseline b) noexcept { return b == EvalBaseline::Initial ? "initial" : "reference"; }

EvalBaseline parse_eval_baseline(std::string_view name) {
  if (name == "initial") return EvalBaseline::Initial;
  if (name == "reference") return EvalBaseline::Reference;
  throw InvalidInput("unknown eval baseline '" + std::string(name) + "'");
}

std::size_t plan_steps(std::size_t budget, std::size_t batch) {
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  const std::size_t steps = budget / batch;
  if (steps == 0) throw ConfigError("budget", "budget below one batch");
  return steps;
}

void RunConfig::validate() const {
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  if (budget < 1) throw ConfigError("budget", "must be >= 1");
  if (batch > budget) throw ConfigError("batch", "batch M exceeds budget B");
  plan_steps(budget, batch);
  if (pool < 1) throw ConfigError("pool", "must be >= 1");
  if (batch > pool) throw ConfigError("batch", "batch M exceeds pool S");
  if (oversample < 1) throw ConfigError("oversample", "must be >= 1");
  if (mc_samples < 1) throw ConfigError("mc_samples", "must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "must be > 0");
  const auto check_temp = [](double t, const char* field) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError(field, "must be finite and >= 0");
  };
  check_temp(gen_temperature, "gen_temperature");
  check_temp(eval_temperature, "eval_temperature");
  check_temp(oracle_temperature, "oracle_temperature");
  check_temp(entropy_temperature, "entropy_temperature");
  if (max_completion_tokens < 1) throw ConfigError("max_completion_tokens", "must be >= 1");
  finetune().validate();
  for (std::size_t i = 0; i < eval_waypoints.size(); ++i) {
    const auto w = eval_waypoints[i];
    const std::string field = "eval_waypoints[" + std::to_string(i) + "]";
    if (w % batch != 0) throw ConfigError(field, "waypoint must be a multiple of batch M");
    if (w > budget) throw ConfigError(field, "waypoint exceeds budget B");
  }
  if (eval_prompts < 1) throw ConfigError("eval_prompts", "must be >= 1");
  if (judge.max_in_flight < 1) throw ConfigError("judge.max_in_flight", "must be >= 1");
}

AcquisitionConfig RunConfig::acquisition(std::uint64_t step_seed) const {
  AcquisitionConfig a;
  a.strategy = strategy;
  a.pool_size = pool;
  a.batch_size = batch;
  a.oversample = oversample;
  a.mc_samples = mc_samples;
  a.gen_temperature = gen_temperature;
  a.entropy_temperature = entropy_temperature;
  a.max_tokens = max_completion_tokens;
  a.beta = beta;
  a.length_normalized = length_normalized;
  a.seed = step_seed;
  return a;
}

DPOConfig RunConfig::finetune() const {
  DPOConfig d = dpo;
  d.beta = beta;
  return d;
}

bool RunConfig::is_waypoint(std::size_t dataset_size) const {
  return std::find(eval_waypoints.begin(), eval_waypoints.end(), dataset_size) != eval_waypoints.end();
}

namespace {

json dpo_to_json(const DPOConfig& d) {
  return {{"lr", d.lr},
          {"adam_beta1", d.adam_beta1},
          {"adam_beta2", d.adam_beta2},
          {"adam_eps", d.adam_eps},
          {"minibatch", d.minibatch},
          {"epochs", d.epochs},
          {"early_stop",
           {{"enabled", d.early_stop.enabled}, {"patience", d.early_stop.patience}, {"min_delta", d.early_stop.min_delta}}}};
}

// Reads `key` from `obj` into `out` when present, reporting type errors with the full field path.
template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& prefix) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key, "has the wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& prefix) {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError(prefix + k, "unknown field");
}

template <typename Parse>
void read_enum(const json& obj, const char* key, Parse parse, const std::string& prefix) {
  if (!obj.contains(key)) return;
  if (!obj[key].is_string()) throw ConfigError(prefix + key, "must be a string");
  try {
    parse(obj[key].get<std::string>());
  } catch (const InvalidInput& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

}  // namespace

std::string dump_run_config(const RunConfig& c) {
  json j = {
      {"budget", c.budget},
      {"batch", c.batch},
      {"pool", c.pool},
      {"oversample", c.oversample},
      {"mc_samples", c.mc_samples},
      {"beta", c.beta},
      {"gen_temperature", c.gen_temperature},
      {"eval_temperature", c.eval_temperature},
      {"oracle_temperature", c.oracle_temperature},
      {"entropy_temperature", c.entropy_temperature},
      {"max_completion_tokens", c.max_completion_tokens},
      {"length_normalized", c.length_normalized},
      {"oracle_grammar_proxy", c.oracle_grammar_proxy},
      {"dpo", dpo_to_json(c.dpo)},
      {"strategy", std::string(to_string(c.strategy))},
      {"mode", std::string(to_string(c.mode))},
      {"eval_waypoints", c.eval_waypoints},
      {"eval_prompts", c.eval_prompts},
      {"eval_baseline", std::string(to_string(c.eval_baseline))},
      {"judge",
       {{"base_url", c.judge.base_url},
        {"path", c.judge.path},
        {"model", c.judge.model},
        {"template", std::string(to_string(c.judge.template_id))},
        {"max_in_flight", c.judge.max_in_flight}}},
      {"seed", c.seed},
  };
  return j.dump(2) + "\n";
}

RunConfig parse_run_config(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("<root>", "config is not a JSON object");
  reject_unknown(j,
                 {"budget", "batch", "pool", "oversample", "mc_samples", "beta", "gen_temperature", "eval_temperature",
                  "oracle_temperature", "entropy_temperature", "max_completion_tokens", "length_normalized",
                  "oracle_grammar_proxy", "dpo", "strategy", "mode", "eval_waypoints", "eval_prompts",
                  "eval_baseline", "judge", "seed"},
                 "");
  RunConfig c;
  read_field(j, "budget", c.budget, "");
  read_field(j, "batch", c.batch, "");
  read_field(j, "pool", c.pool, "");
  read_field(j, "oversample", c.oversample, "");
  read_field(j, "mc_samples", c.mc_samples, "");
  read_field(j, "beta", c.beta, "");
  read_field(j, "gen_temperature", c.gen_temperature, "");
  read_field(j, "eval_temperature", c.eval_temperature, "");
  read_field(j, "oracle_temperature", c.oracle_temperature, "");
  read_field(j, "entropy_temperature", c.entropy_temperature, "");
  read_field(j, "max_completion_tokens", c.max_completion_tokens, "");
  read_field(j, "length_normalized", c.length_normalized, "");
  read_field(j, "oracle_grammar_proxy", c.oracle_grammar_proxy, "");
  read_field(j, "eval_waypoints", c.eval_waypoints, "");
  read_field(j, "eval_prompts", c.eval_prompts, "");
  read_field(j, "seed", c.seed, "");
  read_enum(j, "strategy", [&](const std::string& s) { c.strategy = parse_strategy(s); }, "");
  read_enum(j, "mode", [&](const std::string& s) { c.mode = parse_mode(s); }, "");
  read_enum(j, "eval_baseline", [&](const std::string& s) { c.eval_baseline = parse_eval_baseline(s); }, "");

  if (j.contains("dpo")) {
    const json& d = j["dpo"];
    if (!d.is_object()) throw ConfigError("dpo", "must be an object");
    reject_unknown(d, {"lr", "adam_beta1", "adam_beta2", "adam_eps", "minibatch", "epochs", "early_stop"}, "dpo.");
    read_field(d, "lr", c.dpo.lr, "dpo.");
    read_field(d, "adam_beta1", c.dpo.adam_beta1, "dpo.");
    read_field(d, "adam_beta2", c.dpo.adam_beta2, "dpo.");
    read_field(d, "adam_eps", c.dpo.adam_eps, "dpo.");
    read_field(d, "minibatch", c.dpo.minibatch, "dpo.");
    read_field(d, "epochs", c.dpo.epochs, "dpo.");
    if (d.contains("early_stop")) {
      const json& e = d["early_stop"];
      if (!e.is_object()) throw ConfigError("dpo.early_stop", "must be an object");
      reject_unknown(e, {"enabled", "patience", "min_delta"}, "dpo.early_stop.");
      read_field(e, "enabled", c.dpo.early_stop.enabled, "dpo.early_stop.");
      read_field(e, "patience", c.dpo.early_stop.patience, "dpo.early_stop.");
      read_field(e, "min_delta", c.dpo.early_stop.min_delta, "dpo.early_stop.");
    }
  }
  if (j.contains("judge")) {
    const json& g = j["judge"];
    if (!g.is_object()) throw ConfigError("judge", "must be an object");
    reject_unknown(g, {"base_url", "path", "model", "template", "max_in_flight"}, "judge.");
    read_field(g, "base_url", c.judge.base_url, "judge.");
    read_field(g, "path", c.judge.path, "judge.");
    read_field(g, "model", c.judge.model, "judge.");
    read_field(g, "max_in_flight", c.judge.max_in_flight, "judge.");
    read_enum(g, "template", [&](const std::string& s) { c.judge.template_id = parse_template(s); }, "judge.");
  }
  c.dpo.beta = c.beta;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace apl

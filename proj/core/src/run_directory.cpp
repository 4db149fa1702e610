#include "apl/run_directory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "apl/errors.hpp"
#include "apl/model_io.hpp"
#include "apl/preference_io.hpp"
#include "apl/rng.hpp"

namespace apl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines, std::size_t keep) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < keep && i < lines.size(); ++i) out << lines[i] << '\n';
}

json record_to_json(const StepRecord& r) {
  json j = {{"step", r.step}, {"dataset_size", r.dataset_size}, {"label_calls", r.label_calls},
            {"eval_calls", r.eval_calls}};
  if (r.eval)
    j["eval"] = {{"rate", r.eval->rate},   {"std_error", r.eval->std_error}, {"wins", r.eval->wins},
                 {"evaluated", r.eval->evaluated}, {"failed", r.eval->failed}};
  return j;
}

StepRecord record_from_json(const json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.dataset_size = j.at("dataset_size").get<std::size_t>();
  r.label_calls = j.at("label_calls").get<std::size_t>();
  r.eval_calls = j.at("eval_calls").get<std::size_t>();
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    r.eval = WinRate{e.at("rate").get<double>(), e.at("std_error").get<double>(), e.at("wins").get<std::size_t>(),
                     e.at("evaluated").get<std::size_t>(), e.at("failed").get<std::size_t>()};
  }
  return r;
}

std::optional<std::size_t> parse_step_dir(const std::string& name) {
  if (name.rfind("step-", 0) != 0 || name.size() == 5) return std::nullopt;
  std::size_t value = 0;
  for (char c : name.substr(5)) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + static_cast<std::size_t>(c - '0');
  }
  return value;
}

const char* const kCheckpointFiles[] = {"params.aplm", "adam.bin", "rng.json"};

}  // namespace

std::string metrics_header() { return "step,dataset_size,strategy,seed,win_rate,stderr,label_calls,eval_calls"; }

std::string metrics_row(const RunConfig& cfg, const StepRecord& r) {
  std::string rate, err;
  if (r.eval) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", r.eval->rate);
    rate = buf;
    std::snprintf(buf, sizeof buf, "%.6f", r.eval->std_error);
    err = buf;
  }
  std::ostringstream os;
  os << r.step << ',' << r.dataset_size << ',' << to_string(cfg.strategy) << ',' << cfg.seed << ',' << rate << ','
     << err << ',' << r.label_calls << ',' << r.eval_calls;
  return os.str();
}

void write_state_checkpoint(const fs::path& dir, const RunConfig& cfg, const RunState& state) {
  fs::create_directories(dir);
  write_checkpoint(dir / "params.aplm", state.current);
  state.optimizer.save(dir / "adam.bin");
  const std::size_t next = state.step + 1;
  const json rng = {{"seed", cfg.seed},
                    {"next_step", next},
                    {"streams",
                     {{"step", derive_seed(cfg.seed, "step", next)},
                      {"shuffle", derive_seed(cfg.seed, "shuffle", next)},
                      {"order", derive_seed(cfg.seed, "order", state.step * cfg.batch)}}}};
  write_text(dir / "rng.json", rng.dump(2) + "\n");

  json history = json::array();
  for (const auto& r : state.history) history.push_back(record_to_json(r));
  json digests = json::object();
  for (const char* f : kCheckpointFiles) digests[f] = file_digest(dir / f);
  const json st = {{"format_version", kRunStateVersion},
                   {"step", state.step},
                   {"total_steps", state.total_steps},
                   {"dataset_size", state.dataset.size()},
                   {"counters",
                    {{"label_calls", state.counters.label_calls},
                     {"label_failures", state.counters.label_failures},
                     {"eval_calls", state.counters.eval_calls},
                     {"eval_failures", state.counters.eval_failures}}},
                   {"history", history},
                   {"digests", digests}};
  write_text(dir / "state.json", st.dump(2) + "\n");
}

RunDirectory RunDirectory::create(const fs::path& root, const RunConfig& cfg) {
  cfg.validate();
  if (fs::exists(root / "config.json")) throw InvalidInput("run directory " + root.string() + " already holds a run");
  fs::create_directories(root / "checkpoints");
  write_text(root / "config.json", dump_run_config(cfg));
  write_text(root / "prefs.jsonl", "");
  write_text(root / "judgements.jsonl", "");
  write_text(root / "metrics.csv", metrics_header() + "\n");
  return RunDirectory(root, cfg);
}

RunDirectory RunDirectory::open(const fs::path& root) {
  if (!fs::exists(root / "config.json")) throw InvalidInput(root.string() + " is not a run directory");
  return RunDirectory(root, load_run_config(root / "config.json"));
}

fs::path RunDirectory::checkpoint_dir(std::size_t step) const {
  return root_ / "checkpoints" / ("step-" + std::to_string(step));
}

std::optional<std::size_t> RunDirectory::latest_checkpoint() const {
  std::optional<std::size_t> best;
  const fs::path dir = root_ / "checkpoints";
  if (!fs::exists(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "state.json")) continue;
    if (auto t = parse_step_dir(entry.path().filename().string()); t && (!best || *t > *best)) best = t;
  }
  return best;
}

RunState RunDirectory::restore(std::optional<std::size_t> step) const {
  if (!step) step = latest_checkpoint();
  if (!step) throw IntegrityError("no checkpoint in " + root_.string());
  const fs::path dir = checkpoint_dir(*step);
  const fs::path state_path = dir / "state.json";
  const json st = json::parse(read_text(state_path), nullptr, false);
  if (st.is_discarded() || !st.is_object()) throw IntegrityError("unreadable state file " + state_path.string());
  if (st.value("format_version", 0u) != kRunStateVersion)
    throw IncompatibleVersion(state_path.string() + " has format version " +
                              std::to_string(st.value("format_version", 0u)) + ", expected " +
                              std::to_string(kRunStateVersion));
  for (const char* f : kCheckpointFiles) {
    const fs::path p = dir / f;
    if (!fs::exists(p)) throw IntegrityError("missing checkpoint file " + p.string());
    if (file_digest(p) != st.at("digests").value(f, std::string()))
      throw IntegrityError("checkpoint file " + p.string() + " does not match its recorded digest");
  }

  RunState s;
  try {
    s.step = st.at("step").get<std::size_t>();
    s.total_steps = st.at("total_steps").get<std::size_t>();
    const auto& c = st.at("counters");
    s.counters = {c.at("label_calls").get<std::size_t>(), c.at("label_failures").get<std::size_t>(),
                  c.at("eval_calls").get<std::size_t>(), c.at("eval_failures").get<std::size_t>()};
    for (const auto& r : st.at("history")) s.history.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw IntegrityError("malformed state file " + state_path.string() + ": " + e.what());
  }
  s.current = read_checkpoint(dir / "params.aplm");
  s.optimizer = Adam::load(dir / "adam.bin");
  s.reference = *step == 0 ? s.current : read_checkpoint(checkpoint_dir(0) / "params.aplm");

  const std::size_t n = st.at("dataset_size").get<std::size_t>();
  const auto pref_lines = read_lines(prefs_path());
  const auto judgement_lines = read_lines(judgements_path());
  if (pref_lines.size() < n) throw IntegrityError(prefs_path().string() + " holds fewer pairs than the checkpoint");
  if (judgement_lines.size() < n)
    throw IntegrityError(judgements_path().string() + " holds fewer judgements than the checkpoint");
  s.dataset.reserve(n);
  s.judgements.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.dataset.push_back(preference_from_json(pref_lines[i]));
    s.judgements.push_back(judgement_from_json(judgement_lines[i]));
  }
  return s;
}

void RunDirectory::rewind_to(const RunState& state) const {
  const std::size_t n = state.dataset.size();
  write_lines(prefs_path(), read_lines(prefs_path()), n);
  write_lines(judgements_path(), read_lines(judgements_path()), n);
  std::vector<std::string> rows{metrics_header()};
  for (const auto& r : state.history) rows.push_back(metrics_row(cfg_, r));
  write_lines(metrics_path(), rows, rows.size());
  if (fs::exists(root_ / "checkpoints"))
    for (const auto& entry : fs::directory_iterator(root_ / "checkpoints"))
      if (auto t = parse_step_dir(entry.path().filename().string()); t && *t > state.step) fs::remove_all(entry.path());
  fs::remove_all(final_dir());
}

void RunDirectory::append_metrics(const StepRecord& record) const {
  std::ofstream out(metrics_path(), std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to " + metrics_path().string());
  out << metrics_row(cfg_, record) << '\n';
}

void RunDirectory::on_start(const RunConfig&, const RunState& state) {
  for (const auto& r : state.history) append_metrics(r);
  write_state_checkpoint(checkpoint_dir(state.step), cfg_, state);
}

void RunDirectory::on_step(const RunConfig&, const RunState& state, const StepDelta& delta) {
  append_preferences(prefs_path(), delta.pairs);
  {
    std::ofstream out(judgements_path(), std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + judgements_path().string());
    for (const auto& j : delta.judgements) out << to_jsonl_line(j) << '\n';
  }
  if (delta.record) append_metrics(*delta.record);
  write_state_checkpoint(checkpoint_dir(state.step), cfg_, state);
}

void RunDirectory::on_finish(const RunConfig&, const RunState& state) {
  write_state_checkpoint(final_dir(), cfg_, state);
}

}  // namespace apl

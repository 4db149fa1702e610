#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "apl/acquisition.hpp"
#include "apl/dpo.hpp"
#include "apl/templates.hpp"

namespace apl {

enum class FinetuneMode { Reset, Online };
enum class EvalBaseline { Initial, Reference };

std::string_view to_string(FinetuneMode m) noexcept;
FinetuneMode parse_mode(std::string_view name);
std::string_view to_string(EvalBaseline b) noexcept;
EvalBaseline parse_eval_baseline(std::string_view name);

struct JudgeSettings {
  std::string base_url;
  std::string path = "/chat/completions";
  std::string model = "gpt-4-1106-preview";
  TemplateId template_id = TemplateId::Sentiment;
  std::size_t max_in_flight = 4;
};

/// Everything that defines one active preference learning run. Serialized
/// field-for-field as config.json; `beta` is the single source of the KL
/// coefficient (dpo.beta is overwritten from it).
struct RunConfig {
  std::size_t budget = 512;       ///< B: total labeling oracle calls
  std::size_t batch = 64;         ///< M: pairs acquired per step
  std::size_t pool = 256;         ///< S
  std::size_t oversample = 4;     ///< J (hybrid)
  std::size_t mc_samples = 8;     ///< N
  double beta = 0.2;
  double gen_temperature = 0.7;
  double eval_temperature = 0.25;
  double oracle_temperature = 0.05;
  double entropy_temperature = 1.0;
  std::size_t max_completion_tokens = 8;
  bool length_normalized = false;
  bool oracle_grammar_proxy = false;
  DPOConfig dpo{};
  Strategy strategy = Strategy::Random;
  FinetuneMode mode = FinetuneMode::Reset;
  std::vector<std::size_t> eval_waypoints{64, 128, 256, 512};
  std::size_t eval_prompts = 512;
  EvalBaseline eval_baseline = EvalBaseline::Initial;
  JudgeSettings judge{};
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Acquisition settings for one step; `step_seed` feeds the named streams.
  AcquisitionConfig acquisition(std::uint64_t step_seed) const;
  DPOConfig finetune() const;
  bool is_waypoint(std::size_t dataset_size) const;
};

/// ⌊budget / batch⌋; throws ConfigError("budget", "budget below one batch") when zero.
std::size_t plan_steps(std::size_t budget, std::size_t batch);

std::string dump_run_config(const RunConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace apl

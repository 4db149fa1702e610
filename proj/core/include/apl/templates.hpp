#pragma once

#include <string>
#include <string_view>

namespace apl {

enum class TemplateId { Sentiment, Summarization };

std::string_view to_string(TemplateId id) noexcept;
TemplateId parse_template(std::string_view name);

/// The stored system and user message templates, verbatim.
std::string_view template_system(TemplateId id) noexcept;
std::string_view template_user(TemplateId id) noexcept;

struct RenderedPrompt {
  std::string system;
  std::string user;
};

/// Substitutes the prompt and the two presented completions into the user
/// template. The sentiment template uses {{PROMPT}}, {{COMPLETION-A}},
/// {{COMPLETION-B}}; the summarization template spells them {PROMPT},
/// {COMPLETION_A}, {COMPLETION_B}. Both spellings are accepted for either.
RenderedPrompt render_template(TemplateId id, std::string_view prompt, std::string_view completion_a,
                               std::string_view completion_b);

}  // namespace apl

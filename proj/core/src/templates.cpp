#include "apl/templates.hpp"

#include "apl/errors.hpp"

namespace apl {

namespace assets {
extern const std::string_view k_sentiment_system;
extern const std::string_view k_sentiment_user;
extern const std::string_view k_summarization_system;
extern const std::string_view k_summarization_user;
}  // namespace assets

std::string_view to_string(TemplateId id) noexcept {
  return id == TemplateId::Sentiment ? "sentiment" : "summarization";
}

TemplateId parse_template(std::string_view name) {
  if (name == "sentiment") return TemplateId::Sentiment;
  if (name == "summarization") return TemplateId::Summarization;
  throw InvalidInput("unknown judge template '" + std::string(name) + "'");
}

std::string_view template_system(TemplateId id) noexcept {
  return id == TemplateId::Sentiment ? assets::k_sentiment_system : assets::k_summarization_system;
}

std::string_view template_user(TemplateId id) noexcept {
  return id == TemplateId::Sentiment ? assets::k_sentiment_user : assets::k_summarization_user;
}

namespace {

// Single left-to-right pass so substituted text is never rescanned.
std::string substitute(std::string_view tmpl, std::string_view prompt, std::string_view a, std::string_view b) {
  struct Slot {
    std::string_view key;
    std::string_view value;
  };
  const Slot slots[] = {
      {"{{PROMPT}}", prompt}, {"{{COMPLETION-A}}", a}, {"{{COMPLETION-B}}", b},
      {"{PROMPT}", prompt},   {"{COMPLETION_A}", a},   {"{COMPLETION_B}", b},
  };
  std::string out;
  out.reserve(tmpl.size() + prompt.size() * 2 + a.size() + b.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool matched = false;
    if (tmpl[i] == '{') {
      for (const auto& s : slots) {
        if (tmpl.substr(i, s.key.size()) == s.key) {
          out += s.value;
          i += s.key.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += tmpl[i++];
  }
  return out;
}

}  // namespace

RenderedPrompt render_template(TemplateId id, std::string_view prompt, std::string_view completion_a,
                               std::string_view completion_b) {
  return {std::string(template_system(id)), substitute(template_user(id), prompt, completion_a, completion_b)};
}

}  // namespace apl

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "apl/dpo.hpp"

namespace apl {

/// One JSON object per line:
/// {"prompt":[..],"chosen":[..],"rejected":[..],"step":t,"entropy":x|null,"certainty":x|null}
std::string to_jsonl_line(const PreferencePair& pair);
PreferencePair preference_from_json(const std::string& line);

void append_preferences(const std::filesystem::path& path, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_preferences(const std::filesystem::path& path);

}  // namespace apl

#include "apl/errors.hpp"

#include <utility>

namespace apl {

ConfigError::ConfigError(std::string field, const std::string& message)
    : Error(field + ": " + message), field_(std::move(field)) {}

ParseFailure::ParseFailure(const std::string& message, std::string raw)
    : Error(message + "; raw response: " + raw), raw_(std::move(raw)) {}

}  // namespace apl

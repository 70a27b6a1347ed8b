#include "cmg/errors.hpp"

namespace cmg {

FormatError::FormatError(const std::string& what, std::uint64_t offset)
    : IoError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

StageDependencyError::StageDependencyError(const std::string& stage, const std::string& missing)
    : ValidationError("stage '" + stage + "' requires missing artifact: " + missing), stage_(stage) {}

}  // namespace cmg

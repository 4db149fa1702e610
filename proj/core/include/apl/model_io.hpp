#pragma once

#include <filesystem>
#include <vector>

#include "apl/policy.hpp"
#include "apl/vocabulary.hpp"

namespace apl {

/// Policy checkpoint ("APLM" format): magic "APLM", u32 version, u32 V, k, d, h,
/// u64 parameter count, then float64 values. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
/// Throws IntegrityError (naming the file) on corruption and IncompatibleVersion
/// on a version mismatch.
PolicyParams read_checkpoint(const std::filesystem::path& path);

/// One whitespace-tokenized sequence per line; blank lines are skipped.
std::vector<TokenSequence> read_corpus(const std::filesystem::path& path, const Vocabulary& vocab);
void write_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                  const std::vector<TokenSequence>& sequences);

/// One token per line, line number = token id.
Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

/// FNV-1a 64 digest of a file's bytes, hex-encoded. Used for checkpoint manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace apl

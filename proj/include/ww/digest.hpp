// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_DIGEST_HPP
#define WW_DIGEST_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ww {

/// FNV-1a 64-bit. Stable across runs and platforms; used for content
/// fingerprints, not security.
std::uint64_t fnv1a64(std::string_view bytes);

/// Digest of a file's contents, formatted "fnv1a64:<16 hex digits>".
std::string file_digest(const std::filesystem::path& path);

}  // namespace ww

#endif  // WW_DIGEST_HPP

// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/digest.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "ww/error.hpp"

namespace ww {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream content;
  content << in.rdbuf();
  const std::string data = content.str();

  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return std::string("fnv1a64:") + buf;
}

}  // namespace ww

// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/error.hpp"

namespace ww {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::UnsupportedEncoding: return "unsupported encoding";
    case ErrorKind::EmptyAudio: return "empty audio";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::DegenerateData: return "degenerate data";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

}  // namespace ww

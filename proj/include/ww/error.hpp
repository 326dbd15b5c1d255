// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_ERROR_HPP
#define WW_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ww {

enum class ErrorKind {
  Format,               // malformed container or file syntax
  UnsupportedEncoding,  // well-formed but outside the supported subset
  EmptyAudio,
  Validation,           // field value outside its documented domain
  Conflict,             // uniqueness violation
  Domain,               // argument outside an operation's precondition
  InsufficientData,
  DegenerateData,
  Consistency,          // cross-input referential failure
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ww

#endif  // WW_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>

namespace cwn {

enum class ErrorKind {
  parse,
  empty_input,
  size,
  degenerate,
  parameter,
  missing_data,
  shape,
  io,
  divergence,
  internal,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::size: return "size error";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::missing_data: return "missing data";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::internal: return "internal error";
  }
  return "error";
}

/// Library-wide exception. `kind()` lets callers (the CLI in particular)
/// distinguish bad user input from internal failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures caused by inputs or flags rather than by the library.
  bool is_user_error() const noexcept {
    return kind_ != ErrorKind::internal && kind_ != ErrorKind::divergence;
  }

 private:
  ErrorKind kind_;
};

}  // namespace cwn

#pragma once

#include <stdexcept>
#include <string>

namespace lmsc {

enum class ErrorKind {
  invalid_input,
  integration_coverage,
  ambiguous_stationary,
  infinite_duration,
  zero_likelihood,
  degenerate_separation,
  oracle_range,
  non_finite_objective,
  parse,
  io,
  config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::integration_coverage: return "integration coverage";
    case ErrorKind::ambiguous_stationary: return "ambiguous stationary distribution";
    case ErrorKind::infinite_duration: return "infinite state duration";
    case ErrorKind::zero_likelihood: return "zero likelihood";
    case ErrorKind::degenerate_separation: return "degenerate separation";
    case ErrorKind::oracle_range: return "oracle range";
    case ErrorKind::non_finite_objective: return "non-finite objective";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::config: return "config error";
  }
  return "error";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lmsc

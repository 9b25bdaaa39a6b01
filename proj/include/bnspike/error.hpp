#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bnspike {

enum class ErrorKind {
  DimensionMismatch,
  Singular,
  Precondition,
  GenerationFailure,
  DegenerateState,
  BranchViolation,
  Convergence,
  Separability,
  AssumptionViolation,
  NotApplicable,
  Parse,
  Config,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::Singular: return "singular";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::GenerationFailure: return "generation-failure";
    case ErrorKind::DegenerateState: return "degenerate-state";
    case ErrorKind::BranchViolation: return "branch-violation";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Separability: return "separability";
    case ErrorKind::AssumptionViolation: return "assumption-violation";
    case ErrorKind::NotApplicable: return "not-applicable";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace bnspike

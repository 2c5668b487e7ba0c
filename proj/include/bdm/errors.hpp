#pragma once

#include <stdexcept>
#include <string>

namespace bdm {

// Failure taxonomy for the whole library. exit_code() groups the kinds into
// the CLI contract: 2 for caller/configuration problems, 3 for numeric or
// algorithmic failures discovered mid-computation.
enum class ErrorKind {
  domain,
  schema,
  parse,
  dimension,
  capability,
  evaluation,
  convergence,
  accuracy,
  bracketing,
  linear_algebra,
  no_solution,
  infeasible_match,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::domain:
      case ErrorKind::schema:
      case ErrorKind::parse:
      case ErrorKind::dimension:
      case ErrorKind::capability:
        return 2;
      default:
        return 3;
    }
  }

 private:
  ErrorKind kind_;
};

struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct SchemaError : Error {
  explicit SchemaError(const std::string& w) : Error(ErrorKind::schema, w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::parse, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w)
      : Error(ErrorKind::dimension, w) {}
};
struct CapabilityError : Error {
  explicit CapabilityError(const std::string& w)
      : Error(ErrorKind::capability, w) {}
};
struct EvaluationError : Error {
  explicit EvaluationError(const std::string& w)
      : Error(ErrorKind::evaluation, w) {}
};
struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string& w)
      : Error(ErrorKind::convergence, w) {}
};
struct AccuracyError : Error {
  explicit AccuracyError(const std::string& w)
      : Error(ErrorKind::accuracy, w) {}
};
struct BracketingError : Error {
  explicit BracketingError(const std::string& w)
      : Error(ErrorKind::bracketing, w) {}
};
struct LinearAlgebraError : Error {
  explicit LinearAlgebraError(const std::string& w)
      : Error(ErrorKind::linear_algebra, w) {}
};
struct NoSolutionError : Error {
  explicit NoSolutionError(const std::string& w)
      : Error(ErrorKind::no_solution, w) {}
};
struct InfeasibleMatchError : Error {
  explicit InfeasibleMatchError(const std::string& w)
      : Error(ErrorKind::infeasible_match, w) {}
};

}  // namespace bdm

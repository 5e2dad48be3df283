#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cqr {

enum class ErrorCode {
  invalid_argument,
  config,
  schema,
  parse,
  empty_input,
  io,
  singular_design,
  solver,
  numerical,
  unsupported,
  unreliable,
  precondition,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Interior-point solver gave up before reaching the gap tolerance.
class SolverError : public Error {
 public:
  SolverError(int iterations, double gap, const std::string& message)
      : Error(ErrorCode::solver, message + " (iterations=" + std::to_string(iterations) +
                                     ", gap=" + std::to_string(gap) + ")"),
        iterations_(iterations),
        gap_(gap) {}

  int iterations() const noexcept { return iterations_; }
  double gap() const noexcept { return gap_; }

 private:
  int iterations_;
  double gap_;
};

class NumericalError : public Error {
 public:
  NumericalError(std::ptrdiff_t cluster, const std::string& message)
      : Error(ErrorCode::numerical,
              cluster >= 0 ? message + " (cluster " + std::to_string(cluster) + ")" : message),
        cluster_(cluster) {}

  // Index of the offending cluster, or -1 when not cluster-specific.
  std::ptrdiff_t cluster() const noexcept { return cluster_; }

 private:
  std::ptrdiff_t cluster_;
};

/// Emits a non-fatal diagnostic through the process-wide warning sink.
void warn(const std::string& message);

using WarningSink = void (*)(const char* message, void* user_data);

/// Replaces the warning sink. Passing nullptr silences warnings.
void set_warning_sink(WarningSink sink, void* user_data);

}  // namespace cqr

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2x {

/// Raised when a stationary analysis is requested on a chain whose support
/// graph is not strongly connected.
class ReducibleChainError : public std::runtime_error {
 public:
  ReducibleChainError(const std::string& what, std::vector<std::size_t> unreachable)
      : std::runtime_error(what), unreachable_(std::move(unreachable)) {}

  /// States that cannot be reached from state 0 (or, if all are reachable,
  /// the states that cannot reach state 0).
  const std::vector<std::size_t>& unreachable() const { return unreachable_; }

 private:
  std::vector<std::size_t> unreachable_;
};

/// Iterative eigenvalue estimate did not settle within the iteration budget.
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, double estimate, double residual,
                      std::size_t iterations)
      : std::runtime_error(what),
        estimate_(estimate),
        residual_(residual),
        iterations_(iterations) {}

  double estimate() const { return estimate_; }
  double residual() const { return residual_; }
  std::size_t iterations() const { return iterations_; }

 private:
  double estimate_;
  double residual_;
  std::size_t iterations_;
};

/// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& msg)
      : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) +
                           ": " + msg),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace v2x

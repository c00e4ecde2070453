#pragma once

#include <stdexcept>
#include <string>

namespace zopo {

/// Error categories; values mirror the codes exposed through the C API.
enum class Errc : int {
  ok = 0,
  invalid_argument = 1,  // bad inputs, malformed config, violated preconditions
  io = 2,                // unreadable files, unwritable output directories
  run = 3,               // run-fatal evaluator or harness failures
  numeric = 4,           // linear solve failed even after jitter
  exhausted = 5,         // candidate pool exhausted
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Linear-algebra failure carrying a condition-number estimate of the system
/// that could not be solved.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& message, double condition_estimate)
      : Error(Errc::numeric, message), condition_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace zopo

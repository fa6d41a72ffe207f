#pragma once

#include <stdexcept>
#include <string>

namespace ccopt {

/// Raised when an argument violates an operation's precondition.
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an iterative routine (GJK, EPA, root finding) fails to converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a scene, robot or trajectory file cannot be ingested.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ccopt

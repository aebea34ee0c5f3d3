#pragma once

#include <stdexcept>
#include <string>

namespace objmodel {

/// Input violates a documented precondition (dimensions, ranges, counts).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical estimate could not be formed (degenerate data).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage gave up (tracking lost, disconnected graph, ...).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace objmodel

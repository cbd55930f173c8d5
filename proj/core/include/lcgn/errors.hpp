#pragma once

#include <stdexcept>

namespace lcgn {

// Shape or inner-dimension mismatch between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Violated operation precondition (non-scalar loss, bad label index, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// A softmax row with every position masked out.
struct DegenerateRowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scene generation could not satisfy placement constraints.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A program step received a value outside its domain (unique on a
// non-singleton set, ordinal index past the end, ...).
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lcgn

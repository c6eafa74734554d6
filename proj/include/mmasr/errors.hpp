#pragma once

#include <stdexcept>
#include <string>

namespace mmasr {

// Shape disagreement between operands; message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Sequence too short or too long for the operation.
class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Misuse of a stateful object, e.g. running backward twice on a tape.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or missing input data (files, manifests, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmasr

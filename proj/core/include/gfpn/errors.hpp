#pragma once

#include <stdexcept>
#include <string>

namespace gfpn {

// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// segment_reduce was handed a group without members.
class EmptyGroupError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Malformed input file (PPM, JSON, checkpoint).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gfpn

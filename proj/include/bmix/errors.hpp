#pragma once

#include <stdexcept>
#include <string>

namespace bmix {

// Error hierarchy. The CLI maps InputError (and its subclasses) to exit code 1
// and NumericError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class LookupError : public InputError {
 public:
  using InputError::InputError;
};

class DomainError : public InputError {
 public:
  using InputError::InputError;
};

class RangeError : public InputError {
 public:
  using InputError::InputError;
};

class InvariantError : public InputError {
 public:
  using InputError::InputError;
};

class DegeneracyError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace bmix

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dbat {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy an op's shape rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value is outside an operation's mathematical domain (e.g. log of x <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A precondition of an API call was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed input data or dataset mismatch.
class DataError : public Error {
 public:
  using Error::Error;
};

// A file could not be parsed. Carries the byte offset of the failure.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Training produced a non-finite objective.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbat

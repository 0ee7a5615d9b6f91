#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace isd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf inputs or values outside an operation's numeric domain.
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (wrong tensor kind, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

class EmptyBankError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Declared sizes and payload length disagree.
class LengthError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace isd

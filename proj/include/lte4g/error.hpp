#pragma once

#include <stdexcept>
#include <string>

namespace lte4g {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (matmul inner dims, spmm, elementwise ops).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message carries the file and line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input with out-of-range content (labels, ids, counts).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An imbalance protocol cannot be realized on the given graph.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

#define LTE4G_REQUIRE(cond, ExcType, msg)  \
  do {                                     \
    if (!(cond)) throw ExcType(msg);       \
  } while (false)

}  // namespace lte4g

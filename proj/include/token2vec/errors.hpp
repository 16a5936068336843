#pragma once

#include <stdexcept>
#include <string>

namespace token2vec {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Token id or row index outside a table.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or input that cannot be processed (user error).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace token2vec

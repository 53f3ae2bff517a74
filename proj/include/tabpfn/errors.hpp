#pragma once

#include <stdexcept>
#include <string>

namespace tabpfn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (shape mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A search space or configuration file is malformed.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a failed factorization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Input exceeds the model's feature/class/memory limits.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A sampled causal graph cannot produce a usable label.
class DegenerateGraphError : public Error {
 public:
  using Error::Error;
};

/// Targets cannot be split into the requested number of non-empty classes.
class UnlabelableError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV, schema or binary container.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabpfn

#pragma once

#include <stdexcept>
#include <string>

namespace zsml {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or batch shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar or count argument outside its allowed range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced or consumed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A class has no attribute row.
class AttributeError : public Error {
 public:
  using Error::Error;
};

/// Training data that cannot support the requested fit.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Not enough classes or shots for an episode.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Malformed file bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed file whose contents violate a dataset invariant.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Evaluation protocol cannot run on the given data.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace zsml

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace lichw {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not match what an operator expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Parameters violate their invariants (non-positive beta, negative gamma, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation applied to the wrong kind of layer.
class LayerKindError : public Error {
 public:
  using Error::Error;
};

/// Wraps a failure raised while evaluating one layer of a model.
class LayerError : public Error {
 public:
  LayerError(std::size_t layer_index, const std::string& what)
      : Error("layer " + std::to_string(layer_index) + ": " + what), layer_index_(layer_index) {}
  std::size_t layer_index() const noexcept { return layer_index_; }

 private:
  std::size_t layer_index_;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class PruneError : public Error {
 public:
  using Error::Error;
};

/// Problems decoding a serialized model or tensor.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MalformedHeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace lichw

#pragma once

#include <stdexcept>
#include <string>

namespace tabguide {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the recorded operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. running backward twice on one tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (schedule bounds, training params, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Schema, fitting, encoding and decoding failures.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed constraint specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Mask or scenario generation failure.
class TaskError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training or sampling.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Metric requested over an empty cell set.
class EmptyMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabguide

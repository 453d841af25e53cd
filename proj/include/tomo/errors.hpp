#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tomo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Topology input is cyclic, disconnected or otherwise unusable.
class MalformedTopology : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition (shapes, finiteness, ranges).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix that must be inverted is singular or not positive definite.
class SingularCovariance : public Error {
 public:
  using Error::Error;
};

/// The projection design does not identify the parameters.
class NonIdentifiableDesign : public Error {
 public:
  using Error::Error;
};

/// A distribution with zero spread was passed where a scale is required.
class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

/// Input file or config text could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

/// Process-wide sink for numerical warnings (ill-conditioning and the like).
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "tomo warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

}  // namespace tomo

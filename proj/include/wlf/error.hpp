#pragma once

#include <stdexcept>
#include <string>

namespace wlf {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (specs, schedules, datasets).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape or precondition violation by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, blow-up.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Requested derivative order not supported by the chosen activation.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// File ingestion failures.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace wlf

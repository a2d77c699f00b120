#pragma once

#include <stdexcept>
#include <string>

namespace pidistill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied settings. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data (shapes, labels, missing streams).
class DataError : public Error {
 public:
  using Error::Error;
};

// On-disk container failed validation.
class LoadError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for its input (e.g. single-class AUC).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimization (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace pidistill

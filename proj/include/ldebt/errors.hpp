#pragma once

#include <stdexcept>
#include <string>

namespace ldebt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidObservation : public Error {
 public:
  using Error::Error;
};

/// Stable-sample age coverage is incomplete; the message lists the missing ages.
class CalibrationGap : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedFit : public Error {
 public:
  using Error::Error;
};

class IncompleteExperiment : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage cannot run because an earlier stage has not completed.
class StageError : public Error {
 public:
  using Error::Error;
};

/// Artifacts in the output directory were produced under a different config.
class ManifestMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ldebt

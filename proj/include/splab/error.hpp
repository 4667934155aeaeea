#pragma once

#include <stdexcept>
#include <string>

namespace splab {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes don't line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf surfaced in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value (k out of range, vocab too small, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad runtime input (token id out of range, corpus too small, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// On-disk artifact is malformed (magic/version/checksum/truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged or cannot proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Pipeline stage cannot run (missing dependency, stale artifact).
class StageError : public Error {
 public:
  using Error::Error;
};

// Evaluation task is degenerate (broken baseline, unusable probe).
class TaskError : public Error {
 public:
  using Error::Error;
};

}  // namespace splab

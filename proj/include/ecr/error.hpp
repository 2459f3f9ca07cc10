#pragma once

#include <stdexcept>
#include <string>

namespace ecr {

// All library failures derive from ecr::Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structural problem in an input file (ragged rows, bad header, truncated).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A token that should be numeric is not.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Values parsed but violate a data invariant (NaN, Inf).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDatasetError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, std::string branch, int batch)
      : Error(what), epoch_(epoch), branch_(std::move(branch)), batch_(batch) {}

  int epoch() const { return epoch_; }
  const std::string& branch() const { return branch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  std::string branch_;
  int batch_;
};

}  // namespace ecr

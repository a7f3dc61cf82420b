#pragma once

#include <stdexcept>
#include <string>

namespace mas3 {

// Base for every error raised by the library. The CLI maps ValidationError
// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedInstance : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class SamplingStarvation : public Error {
 public:
  SamplingStarvation(const std::string& what, int worst_class)
      : Error(what), worst_class_(worst_class) {}
  int worst_class() const { return worst_class_; }

 private:
  int worst_class_;
};

class DegenerateClass : public Error {
 public:
  using Error::Error;
};

class Divergence : public Error {
 public:
  using Error::Error;
};

}  // namespace mas3

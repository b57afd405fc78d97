#pragma once

#include <stdexcept>
#include <string>

namespace sidlab {

// Root of every library exception. Subclasses map to the error classes
// named in the module docs so callers can branch on them.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};
class InputError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class VocabularyError : public Error {
 public:
  using Error::Error;
};
class SamplingError : public Error {
 public:
  using Error::Error;
};
class GenerationError : public Error {
 public:
  using Error::Error;
};
class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace sidlab

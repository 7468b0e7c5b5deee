#pragma once

#include <stdexcept>
#include <string>

namespace docspot {

// Invalid parameter value (even block size, non-positive scale, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input does not match what an operation expects (patch size, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file could not be parsed: bad magic, version, truncation, shape mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested sample counts exceed what the data can provide.
class CountError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible components, e.g. store and model embedding dims differ.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Analytic and numerical gradients disagree beyond tolerance.
class GradientCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace docspot

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gateseg {

/// Caller handed in values that violate an operation's preconditions.
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk or serialized data (RLE counts, PNG frames, NPY headers).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A ratio metric whose denominator is zero under the active policy.
class MetricUndefined : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class TrainingError : public std::runtime_error {
public:
  TrainingError(std::size_t epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

} // namespace gateseg

#pragma once

#include <stdexcept>
#include <string>

namespace mattnet {

/// Bad user-supplied data (files, CLI arguments, empty inputs). CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// API misuse, e.g. backward on a non-scalar or an optimizer step without grads.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite values during training. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mattnet

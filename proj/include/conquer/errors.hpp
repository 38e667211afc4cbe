#pragma once

#include <stdexcept>
#include <string>

namespace conquer {

/// Invalid input to a library call (bad bounds, mismatched sizes, malformed data).
class ArgumentError : public std::invalid_argument {
  public:
    explicit ArgumentError(const std::string &what) : std::invalid_argument(what) {}
};

/// Requested exact computation exceeds the dense-vector memory budget.
class CapacityError : public std::length_error {
  public:
    explicit CapacityError(const std::string &what) : std::length_error(what) {}
};

/// NaN or Inf encountered in a loss or gradient.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string &what) : std::runtime_error(what) {}
};

/// Malformed file contents.
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string &what) : std::runtime_error(what) {}
};

}  // namespace conquer

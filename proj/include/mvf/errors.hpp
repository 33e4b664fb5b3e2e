#pragma once

#include <stdexcept>
#include <string>

namespace mvf {

// Malformed input or violated precondition.
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Certificates not met, overflow, iteration or partition budgets exhausted.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvf

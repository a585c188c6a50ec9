#pragma once

#include <stdexcept>
#include <string>

namespace gaussq {

// Bad parameters, violated stability/ordering constraints, malformed configs.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Quadrature, optimizer or factorization failures.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gaussq

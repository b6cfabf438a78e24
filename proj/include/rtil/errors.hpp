#pragma once

#include <stdexcept>
#include <string>

namespace rtil {

// Precondition / dimension violations on public entry points.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A computation produced non-finite values or failed to converge.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A matrix that must be full rank for the requested solve is not.
struct SingularError : NumericalError {
    using NumericalError::NumericalError;
};

// Iterative solver detected divergence (step size too large).
struct StepSizeError : NumericalError {
    using NumericalError::NumericalError;
};

// Malformed configuration (bad field values, inconsistent stage counts).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the location of the problem.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rtil

#pragma once

#include <stdexcept>
#include <string>

namespace fan {

// Base for all library errors. Subclasses map onto the CLI exit codes:
// validation-type errors exit 1, numeric/solver/capacity errors exit 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad index into a grid, distribution, or table.
struct IndexError : Error {
    using Error::Error;
};

// Vector/matrix arity mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Unknown instruction id or missing table entry.
struct LookupError : Error {
    using Error::Error;
};

// Malformed input file.
struct ParseError : Error {
    using Error::Error;
};

// Invalid configuration value or combination.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite loss, underflowed ratio, or other numeric fault.
struct NumericError : Error {
    using Error::Error;
};

// Root finder or optimizer failed to make progress.
struct SolverError : Error {
    using Error::Error;
};

// Problem size exceeds what an exact method can enumerate.
struct CapacityError : Error {
    using Error::Error;
};

// File system failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace fan

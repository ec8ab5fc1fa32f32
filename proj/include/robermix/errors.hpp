#pragma once

#include <stdexcept>
#include <string>

namespace robermix {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration value or unknown config key.
struct ConfigError : Error {
    using Error::Error;
};

// Tensor/matrix shape disagreement.
struct ShapeError : Error {
    using Error::Error;
};

// A data split would be empty or too short for the requested windowing.
struct SplitError : Error {
    using Error::Error;
};

// Malformed file contents (CSV, checkpoint, metadata).
struct FormatError : Error {
    using Error::Error;
};

// Requested range lies outside the available data.
struct RangeError : Error {
    using Error::Error;
};

// Filesystem-level failure (open/read/write).
struct IoError : Error {
    using Error::Error;
};

// Adaptive step size fell below the resolvable floor while still rejecting.
struct StepSizeUnderflow : Error {
    using Error::Error;
};

// NaN/Inf encountered during integration or sampling.
struct NonFiniteState : Error {
    using Error::Error;
};

// NaN/Inf encountered in network activations or training loss.
struct NonFiniteError : Error {
    using Error::Error;
};

// Backward called with a trace that does not match, or was already consumed.
struct TraceMismatch : Error {
    using Error::Error;
};

// A ground-truth channel is constant, so range normalization is undefined.
struct DegenerateRange : Error {
    using Error::Error;
};

}  // namespace robermix

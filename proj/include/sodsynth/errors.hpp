#pragma once

#include <stdexcept>
#include <string>

namespace sodsynth {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/image shape or axis problems.
struct DimensionError : Error {
    using Error::Error;
};

/// A parameter is outside its valid range.
struct ParameterError : Error {
    using Error::Error;
};

/// An API was called in a way it does not support.
struct UsageError : Error {
    using Error::Error;
};

/// File read/write failures. Messages include the offending path.
struct IoError : Error {
    using Error::Error;
};

/// A file parsed fine as bytes but violates the expected format.
struct FormatError : Error {
    using Error::Error;
};

/// Synthetic sample or toy data generation could not produce a valid result.
struct GenerationError : Error {
    using Error::Error;
};

/// Training aborted (e.g. non-finite gradient).
struct TrainingError : Error {
    using Error::Error;
};

/// A function could not be evaluated (non-finite value).
struct EvaluationError : Error {
    using Error::Error;
};

/// A metric is undefined for the given input.
struct UndefinedMetricError : Error {
    using Error::Error;
};

} // namespace sodsynth

#pragma once

#include <stdexcept>
#include <string>

namespace mmct {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct ZeroNorm : Error {
    using Error::Error;
};

struct NonFiniteFunction : Error {
    using Error::Error;
};

struct NonFiniteGradient : Error {
    using Error::Error;
};

struct InvalidDimension : Error {
    using Error::Error;
};

struct StaleCache : Error {
    using Error::Error;
};

struct InvalidKey : Error {
    using Error::Error;
};

struct EmptyBatch : Error {
    using Error::Error;
};

struct EmptyTestSet : Error {
    using Error::Error;
};

struct DegenerateLabels : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

/// Checkpoint file declares a version this build cannot read.
struct VersionMismatch : FormatError {
    using FormatError::FormatError;
};

} // namespace mmct

#pragma once

#include <stdexcept>
#include <string>

namespace cfrep {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents or argument lengths that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf reached a place where only finite values are allowed.
class NumericFault : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or inconsistent on-disk data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (config files, CLI flags, presets).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace cfrep

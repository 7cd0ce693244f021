#pragma once

#include <stdexcept>
#include <string>

namespace vflu {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape or size mismatch between tensors, parameter vectors or caches.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid argument value (out-of-range label, non-positive radius, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (bad magic, truncation). Message carries the byte offset.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Bad experiment configuration. Message carries file/line/field diagnostics.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace vflu

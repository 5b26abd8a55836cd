#pragma once

#include <stdexcept>
#include <string>

namespace shellac {

/// Base of every library error. `module()` names the subsystem that raised it.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Caller violated a precondition (bad argument, bad option, bad config key).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Input data is missing, malformed or inconsistent.
class DataError : public Error {
public:
    using Error::Error;
};

/// A computation produced non-finite values or otherwise broke down.
class NumericError : public Error {
public:
    using Error::Error;
};

// WAV-specific data errors, kept distinct so callers can tell them apart.
class MalformedWavError : public DataError {
public:
    using DataError::DataError;
};

class UnsupportedCodecError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace shellac

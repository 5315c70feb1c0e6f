#pragma once

#include <stdexcept>
#include <string>

namespace mathbode {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user configuration: unknown preset, empty axis, invalid constants.
class ConfigError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class SingularInstance : public Error {
public:
    using Error::Error;
};

class UnsupportedSignal : public Error {
public:
    using Error::Error;
};

class EmptyPlan : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class FitError : public Error {
public:
    using Error::Error;
};

class TooFewPoints : public FitError {
public:
    using FitError::FitError;
};

class RankDeficient : public FitError {
public:
    using FitError::FitError;
};

class NoValidSweeps : public Error {
public:
    using Error::Error;
};

/// A string that is not a plain decimal literal was handed to the answer formatter.
class MalformedLiteral : public Error {
public:
    using Error::Error;
};

/// A results or dataset file failed validation. Carries the 1-based line number.
class DataError : public Error {
public:
    DataError(const std::string& what, std::size_t line);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace mathbode

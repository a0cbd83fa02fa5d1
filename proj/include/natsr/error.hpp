#pragma once

#include <stdexcept>
#include <string>

namespace natsr {

/// Base of every error raised by the library. Each subclass maps to one
/// failure family so callers (the CLI in particular) can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A non-finite value reached an operation that requires finite input.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A curvature matrix could not be factorized (not SPD after damping).
class CurvatureError : public Error {
public:
    using Error::Error;
};

/// An object was used out of order (e.g. backward without a matching forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied data violates a precondition (too short, empty, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// CSV ingestion failed; the message carries the file location.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// The naive forecaster is perfect on the series, so MASE is undefined.
class DegenerateSeriesError : public Error {
public:
    using Error::Error;
};

/// Invalid, unknown or missing configuration key.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace natsr

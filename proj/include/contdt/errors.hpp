#pragma once

#include <stdexcept>
#include <string>

namespace contdt {

/// Base of every error raised by the toolkit. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration, unknown key, bad index into a configured collection.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes that do not compose.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf in activations, losses or gradients.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Missing task, head or adapter set.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Environment produced a non-finite transition during evaluation.
class RolloutError : public Error {
public:
    using Error::Error;
};

/// Metric requested over an incomplete or too-small performance matrix.
class MetricError : public Error {
public:
    using Error::Error;
};

/// A gradient was written into a frozen tensor. Always a programming error.
class FrozenParameterError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace contdt

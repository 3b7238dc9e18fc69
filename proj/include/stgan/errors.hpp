#pragma once

#include <stdexcept>
#include <string>

namespace stgan {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between matrices or between inputs and a configuration.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Caller broke a documented precondition (non-scalar loss, missing self edge, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Input file or column layout does not match the expected schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Unknown categorical code, negative domain value and similar.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (zero locations, unknown variant, bad fractions...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Graph construction or expansion violated an ordering or identity rule.
class GraphError : public Error {
public:
    using Error::Error;
};

/// Query refers to a timestamp earlier than the available history.
class TemporalError : public Error {
public:
    using Error::Error;
};

/// Query refers to a location that is not in the history.
class LocationError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Checkpoint content does not match its checksums or is truncated.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Metric requested on empty or mismatched inputs.
class MetricError : public Error {
public:
    using Error::Error;
};

/// Split parameters leave no test block.
class SplitError : public Error {
public:
    using Error::Error;
};

}  // namespace stgan

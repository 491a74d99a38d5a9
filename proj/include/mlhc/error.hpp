/**
 * @file error.hpp
 * @brief Exception hierarchy shared by every stage of the pipeline.
 *
 * Each category maps onto one CLI exit code (see cli/exit codes in README).
 */
#pragma once

#include <stdexcept>
#include <string>

namespace mlhc {

/// Base class for all library errors. Plain invalid-argument style failures
/// (shape mismatch, bad preconditions) throw this directly.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A required upstream artifact is absent or stale. CLI exit code 3.
class MissingInputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, divergence, degenerate statistics. CLI exit code 4.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Binary file decoding failures (OGF, checkpoints).
class ParseError : public Error {
public:
    enum class Kind { truncated, bad_magic, bad_version, shape_mismatch, checksum_mismatch };

    ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace mlhc

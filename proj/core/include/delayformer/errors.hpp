#pragma once

#include <stdexcept>
#include <string>

namespace delayformer {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape/extent mismatch between tensors (message names the offending shapes).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed textual input (CSV, JSON config); message carries the location.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Unrecognized container format (bad magic, malformed framing).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed container written by an incompatible format version.
class UnsupportedVersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Structurally valid container with inconsistent contents (truncation, bad offsets).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Numerical solver could not produce a result.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure (open/read/write).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace delayformer

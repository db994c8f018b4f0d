#pragma once

#include <stdexcept>
#include <string>

namespace msr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: bad dimensions, out-of-range values, malformed config.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A value lies outside its documented range (e.g. head pose beyond +/-5 deg).
class RangeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A file the command depends on does not exist.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

/// A serialized file failed its magic, version, or checksum guard.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Refusal to replace an existing artifact with different content.
class ArtifactConflictError : public Error {
public:
    using Error::Error;
};

}  // namespace msr

#pragma once

#include <stdexcept>
#include <string>

namespace tspsens {

/// Base class for every error raised by the library. The CLI maps these to
/// exit codes and the service maps them to HTTP statuses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: out-of-range coordinates, malformed constraints, n < 4.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Index outside [0, n).
class IndexError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Problem too large for the requested method (e.g. exact solve above 18 nodes).
class SizeLimitError : public Error {
public:
    using Error::Error;
};

/// No tour avoids the forbidden edges.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Malformed file: bad magic, truncated record, unknown version.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Two artifacts disagree: cache vs dataset, scores vs labels, checksum mismatch.
class AlignmentError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace tspsens

#pragma once

#include <stdexcept>
#include <string>

namespace pdfcube {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration. Maps to CLI exit status 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Coordinate or index outside the cube.
class BoundsError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// File system failures, short reads, corrupt headers. Maps to CLI exit status 2.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace pdfcube

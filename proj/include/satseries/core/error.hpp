#pragma once

#include <stdexcept>
#include <string>

namespace satseries {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or value. The message names the offending field and,
/// where known, the file and line.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A domain invariant was violated by caller-provided data.
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace satseries

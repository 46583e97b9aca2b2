#pragma once

#include <stdexcept>
#include <string>

namespace htnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Element counts or mode lengths disagree with what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A contracted mode pair has different lengths.
class ContractionError : public Error {
public:
    using Error::Error;
};

/// Malformed argument (duplicate mode, bad permutation, nonpositive rank, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Components of an HT tensor do not match its dimension tree.
class StructureError : public Error {
public:
    using Error::Error;
};

/// A cached forward pass no longer matches the parameters it came from.
class StateError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Model or configuration file could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace htnn

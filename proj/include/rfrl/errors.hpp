#pragma once

#include <stdexcept>
#include <string>

namespace rfrl {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A precondition on the caller's arguments was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// An operation produced or received a NaN/Inf.
class NumericsError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed file (tensor, checkpoint, PGM).
class FormatError : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

}  // namespace rfrl

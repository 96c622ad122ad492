#pragma once

#include <stdexcept>
#include <string>

namespace pbca {

// Base of every error raised by the library. The CLI maps each family to an
// exit code (see tools/pbca.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A NaN or infinity appeared in a value or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Input data cannot support the requested operation.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

// Bad configuration file, CLI usage, or checkpoint.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pbca

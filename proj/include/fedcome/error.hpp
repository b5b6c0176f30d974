#pragma once

#include <stdexcept>
#include <string>

namespace fedcome {

// All library failures derive from Error so callers (the CLI in particular)
// can map them to exit codes without knowing every subtype.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite value crossed a module boundary.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

// Malformed QP (asymmetric Q, nonconformable shapes).
class ProblemError : public Error {
public:
    using Error::Error;
};

class OracleError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fedcome

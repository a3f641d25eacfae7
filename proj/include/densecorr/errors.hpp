#pragma once

#include <stdexcept>
#include <string>

namespace densecorr {

// Root of every error thrown by the library. The CLI maps the three families
// below onto exit codes 2 (argument), 3 (data) and 4 (numeric).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Data-error flavours. Kept as distinct types so tests can tell them apart.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

class TopologyError : public DataError {
public:
    using DataError::DataError;
};

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

class EmptyMeshError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateGeometryError : public DataError {
public:
    using DataError::DataError;
};

class DisconnectedMeshError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateSpectrumError : public NumericError {
public:
    using NumericError::NumericError;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, int iterations)
        : NumericError(what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}
    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

}  // namespace densecorr

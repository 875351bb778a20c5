#pragma once

#include <stdexcept>
#include <string>

namespace gfmmr {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
    usage = 1,
    data = 2,
    numerical = 3,
    convergence = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ShapeError : public DataError {
public:
    explicit ShapeError(const std::string& what) : DataError("shape mismatch: " + what) {}
};

class SizeLimitError : public UsageError {
public:
    explicit SizeLimitError(const std::string& what) : UsageError("size limit: " + what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

class FactorizationError : public NumericalError {
public:
    explicit FactorizationError(const std::string& what)
        : NumericalError("factorization failed: " + what) {}
};

class EmptyComponentError : public NumericalError {
public:
    EmptyComponentError(int component, const std::string& what)
        : NumericalError(what), component_(component) {}
    int component() const noexcept { return component_; }

private:
    int component_;
};

class DegenerateModelError : public NumericalError {
public:
    explicit DegenerateModelError(const std::string& what)
        : NumericalError("degenerate model: " + what) {}
};

class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& what) : Error(ErrorKind::convergence, what) {}
};

}  // namespace gfmmr

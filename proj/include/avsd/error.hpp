#pragma once

#include <stdexcept>
#include <string>

namespace avsd {

// Each error family maps onto one process exit code / C API status.

/// Bad arguments or configuration (exit code 1).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or malformed input data (exit code 2).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence during computation (exit code 3).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace avsd

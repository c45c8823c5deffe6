#pragma once

#include <stdexcept>
#include <string>

namespace cgheat {

/// Bad configuration or argument values. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (solver non-convergence, unbracketed root, ...). CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure. CLI exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite data encountered where finite values are required.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cgheat

#pragma once

#include <stdexcept>
#include <string>

namespace treemed {

// Bad or inconsistent user input (files, columns, parameters). CLI exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (rank deficiency, non-convergence, degenerate test). CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace treemed

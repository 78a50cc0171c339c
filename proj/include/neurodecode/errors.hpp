#pragma once

#include <stdexcept>
#include <string>

namespace neurodecode {

// Bad inputs: shape mismatches, malformed files, invalid configs.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: divergent training, an eigensolver that did not
// converge. The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace neurodecode

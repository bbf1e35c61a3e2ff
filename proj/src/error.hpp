#pragma once

#include <stdexcept>
#include <string>

namespace yieldcast {

/// Bad input: malformed files, violated preconditions, inconsistent geometry.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A computation that could not complete: singular systems, non-finite densities.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace yieldcast

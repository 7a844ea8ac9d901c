#pragma once

#include <stdexcept>

namespace neuronal {

// Bad inputs: malformed files, shape mismatches, out-of-range parameters.
// The CLI maps this to exit code 1.
class validation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem failures: missing paths, unreadable or short files.
// The CLI maps this to exit code 2.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace neuronal

#pragma once

#include <stdexcept>
#include <string>

namespace sdm {

// Raised for bad inputs: malformed files, out-of-range values, shape
// mismatches. The CLI maps it to exit code 1; everything else exits 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sdm

#pragma once

#include <stdexcept>
#include <string>

namespace fedmmd {

// Error taxonomy. Kept small on purpose: each type maps onto one C API
// status code (see include/fedmmd.h).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedmmd

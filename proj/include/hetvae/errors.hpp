#pragma once

#include <stdexcept>
#include <string>

namespace hetvae {

// Error taxonomy mirrored by the CLI exit codes: config errors exit 2,
// data errors exit 3, numerical failures exit 4.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/contract violations inside the numerics core.
struct dim_error : std::invalid_argument {
    explicit dim_error(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace hetvae

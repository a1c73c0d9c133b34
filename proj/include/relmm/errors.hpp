#pragma once

#include <stdexcept>
#include <string>

namespace relmm {

// Invalid experiment configuration (bad file, impossible room, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during training (non-finite loss or gradient).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace relmm

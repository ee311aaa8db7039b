#pragma once

#include <stdexcept>
#include <string>

namespace loraplan {

// Bad scenario/config input (CLI exit code 2).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad data file content: traces, result CSVs (CLI exit code 3).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace loraplan

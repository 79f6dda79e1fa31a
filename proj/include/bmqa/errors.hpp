#pragma once

#include <stdexcept>
#include <string>

namespace bmqa {

// Bad input data or file contents (manifest records, image files,
// checkpoints with wrong magic/CRC, ...). CLI exit code 1.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract or configuration (shape mismatch, non-scalar
// loss, missing model parts, unknown config keys, ...). CLI exit code 2.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bmqa

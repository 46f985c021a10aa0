// Error types shared across the library. Each maps to a CLI exit code:
// InputError -> 2, NumericError -> 3, BackendError -> 4.
#pragma once

#include <stdexcept>
#include <string>

namespace paragen {

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed message on an otherwise live backend connection.
struct ProtocolError : BackendError {
    explicit ProtocolError(const std::string& msg) : BackendError(msg) {}
};

}  // namespace paragen

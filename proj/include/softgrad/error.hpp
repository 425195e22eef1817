#pragma once

#include <stdexcept>
#include <string>

namespace softgrad {

/// Shape or wiring mismatch: bad dimensions, stale tapes, malformed files.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration values or unknown configuration keys.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller violated an operation precondition (e.g. sampling from an underfull buffer).
struct PreconditionError : std::runtime_error {
    explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// Interaction protocol violation (e.g. stepping a finished episode).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace softgrad

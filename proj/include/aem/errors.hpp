#pragma once

#include <stdexcept>
#include <string>

namespace aem {

// Invalid architecture, shapes, or settings.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (backward without a scalar loss, non-positive counts, ...).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable input data (unreadable image, empty dataset, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or broken invariants met while evaluating a model.
struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace aem

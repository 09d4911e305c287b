#pragma once

#include <stdexcept>
#include <string>

namespace memto {

// Bad flags, bad config values, contradictory options. CLI exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, malformed or dimensionally inconsistent data. CLI exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training. CLI exit code 4.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace memto

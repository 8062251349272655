#pragma once

#include <stdexcept>

namespace iclab {

// Shape or settings contract violations.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf escaped a forward op or an optimizer step.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse (backward called twice, stale Var, ...).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset loading problems (missing or corrupt files).
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace iclab

#pragma once

#include <stdexcept>
#include <string>

namespace hansnet {

/// Shape or rank mismatch between operands.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN/Inf produced or a division by a near-zero value.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Invalid or unknown configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File could not be read, written, or parsed.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hansnet

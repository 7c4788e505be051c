#pragma once

#include <stdexcept>
#include <string>

namespace mcdd {

/// Raised when an operation produces or receives non-finite values,
/// or when training diverges. Distinct from std::invalid_argument,
/// which is reserved for contract violations (bad shapes, bad config).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mcdd

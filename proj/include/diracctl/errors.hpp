#pragma once

#include <stdexcept>
#include <string>

namespace diracctl {

/// Input or configuration that violates a documented precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A linear or nonlinear solve that failed to meet its tolerance.
class SolverFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

} // namespace diracctl

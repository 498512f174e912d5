#pragma once

#include <stdexcept>
#include <string>

namespace jexit {

struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Deterministic trajectory left the configured bounding region.
struct EscapeError : std::runtime_error {
    double escape_time;
    explicit EscapeError(const std::string& what, double t)
        : std::runtime_error(what), escape_time(t) {}
};

// A simulated path produced a non-finite state.
struct BlowUpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-trial step budget exhausted.
struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace jexit

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ergo {

// Caller handed us something invalid (bad shapes, out-of-range parameters).
// The CLI maps this to exit code 2.
class PreconditionError : public std::runtime_error {
public:
    explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

// An internal mathematical invariant failed. This always indicates a bug,
// never bad input. CLI exit code 3.
class InvariantViolation : public std::logic_error {
public:
    explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

// A computation would exceed the configured resource budget. CLI exit code 4.
class ResourceGuardError : public std::runtime_error {
public:
    explicit ResourceGuardError(const std::string& what) : std::runtime_error(what) {}
};

// Process-wide cap on dense array sizes, counted in double entries.
std::size_t memory_cap_entries();
void set_memory_cap_entries(std::size_t entries);

// Throws ResourceGuardError if a dense allocation of `entries` doubles
// would exceed the cap.
void guard_alloc(std::size_t entries);

inline void require(bool cond, const std::string& what) {
    if (!cond) throw PreconditionError(what);
}

inline void ensure(bool cond, const std::string& what) {
    if (!cond) throw InvariantViolation(what);
}

} // namespace ergo

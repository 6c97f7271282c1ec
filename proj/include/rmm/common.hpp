#pragma once
// Shared error taxonomy and small numeric helpers.
//
// Every failure the library can produce maps onto one of four families so the
// CLI can translate exceptions to stable exit codes:
//   ConfigError    -> bad configuration / arguments            (exit 2)
//   DataError      -> unreadable or malformed external data    (exit 3)
//   NumericalError -> non-finite values, failed numeric checks (exit 4)
//   ContractError  -> internal invariant violation (a bug)     (exit 4)

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace rmm {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values, bad op arguments, shape mismatches.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or unreadable external data (corpus files, checkpoints).
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or a failed numerical acceptance check.
struct NumericalError : Error {
    using Error::Error;
};

// Internal invariant broken; indicates a bug, not user error.
struct ContractError : Error {
    using Error::Error;
};

// Rounding convention used everywhere a real count is quantized:
// round half away from zero (2.5 -> 3, -2.5 -> -3).
inline long long round_half_away(double x) {
    return std::llround(x);
}

// Shortest stable text form for doubles in CSV logs. %.17g round-trips
// exactly and is byte-stable across runs of the same binary.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

// Relative error with an absolute floor, used by gradient checks:
// |a - b| / max(|a|, |b|, floor).
inline double rel_error(double a, double b, double floor_ = 1e-3) {
    double denom = std::fmax(std::fmax(std::fabs(a), std::fabs(b)), floor_);
    return std::fabs(a - b) / denom;
}

}  // namespace rmm

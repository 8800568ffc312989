#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace grubsim {

/// Simulation time in integer ticks (nanosecond scale). All externally
/// visible instants (arrivals, deadlines, event timestamps) are integers,
/// which keeps trace comparison and determinism checks exact.
using Time = std::int64_t;

/// Wide integer for budget accounting and intermediate products.
using Wide = __int128;

/// Fixed-point bandwidth: kBwOne represents a bandwidth of 1.0 (one full
/// processor). Budgets are kept in units of tick / (kBwOne * m) so that
/// consumption at any reclaiming rate stays exact integer arithmetic.
using Bw = std::int64_t;
inline constexpr Bw kBwOne = Bw{1} << 32;

/// Absolute tolerance for floating-point comparisons in the analysis
/// layer (admission tests, reported values). The engine core does not
/// need it: its arithmetic is exact.
inline constexpr double kTol = 1e-9;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the simulation reaches a state the transition rules forbid.
struct EngineInvariantViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Bandwidth of a reservation with budget `q` per period `p`, rounded to
/// the fixed-point grid. The engine uses this quantized value everywhere
/// (rates, zero-lag times, rule-5 boundary), so all derived quantities
/// agree exactly.
inline Bw bw_from_qp(Time q, Time p) {
    if (p <= 0 || q <= 0) {
        throw ConfigError("bandwidth requires positive budget and period");
    }
    Wide num = static_cast<Wide>(q) * kBwOne + p / 2;
    Bw u = static_cast<Bw>(num / p);
    if (u < 1) {
        u = 1;
    }
    if (u > kBwOne) {
        u = kBwOne;
    }
    return u;
}

inline double bw_to_double(Bw u) {
    return static_cast<double>(u) / static_cast<double>(kBwOne);
}

/// ceil(a / b) for a >= 0, b > 0.
inline Wide ceil_div(Wide a, Wide b) {
    return (a + b - 1) / b;
}

inline std::string wide_to_string(Wide v) {
    if (v == 0) {
        return "0";
    }
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1
                              : static_cast<unsigned __int128>(v);
    std::string out;
    while (u > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
        u /= 10;
    }
    if (neg) {
        out.push_back('-');
    }
    return {out.rbegin(), out.rend()};
}

inline Wide wide_from_string(const std::string& s) {
    if (s.empty()) {
        throw ConfigError("empty integer field");
    }
    std::size_t i = 0;
    bool neg = false;
    if (s[0] == '-' || s[0] == '+') {
        neg = s[0] == '-';
        i = 1;
    }
    if (i == s.size()) {
        throw ConfigError("malformed integer: " + s);
    }
    Wide v = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') {
            throw ConfigError("malformed integer: " + s);
        }
        v = v * 10 + (s[i] - '0');
    }
    return neg ? -v : v;
}

} // namespace grubsim

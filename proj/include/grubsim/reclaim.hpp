#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grubsim/ticks.hpp"

namespace grubsim {

enum class Mode { None, Parallel, Sequential };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

/// Inactive-bandwidth bookkeeping. Parallel reclaiming keeps one global
/// pool; sequential reclaiming keeps one pool per processor, consumable
/// only by the server running there.
struct ReclaimState {
    Mode mode = Mode::None;
    Bw global_uinact = 0;
    std::vector<Bw> per_cpu_uinact; // length m in sequential mode

    static ReclaimState make(Mode mode, int m) {
        ReclaimState r;
        r.mode = mode;
        if (mode == Mode::Sequential) {
            r.per_cpu_uinact.assign(static_cast<std::size_t>(m), 0);
        }
        return r;
    }

    /// Rule 5: the server's bandwidth becomes reclaimable.
    void store(Bw u, int cpu) {
        if (mode == Mode::Parallel) {
            global_uinact += u;
        } else if (mode == Mode::Sequential) {
            per_cpu_uinact[static_cast<std::size_t>(cpu)] += u;
        }
    }

    /// Rule 1: the server takes its bandwidth back from where it was stored.
    void recover(Bw u, int cpu) {
        if (mode == Mode::Parallel) {
            global_uinact -= u;
        } else if (mode == Mode::Sequential) {
            per_cpu_uinact[static_cast<std::size_t>(cpu)] -= u;
        }
    }
};

/// Budget depletion rate for a server of bandwidth `u` executing on `cpu`,
/// in fixed-point units of 1 / (kBwOne * m) budget-ticks per wall tick:
///   none:       1
///   parallel:   max{U_i, 1 - U_inact / m}
///   sequential: max{U_i, 1 - U_inact[cpu]}
/// The max floor keeps every rate in [U_i, 1], so a continuously
/// backlogged server still drains its whole budget within one period.
inline std::int64_t depletion_rate_fp(const ReclaimState& reclaim, Bw u, int cpu, int m) {
    const std::int64_t full = static_cast<std::int64_t>(kBwOne) * m;
    switch (reclaim.mode) {
    case Mode::None:
        return full;
    case Mode::Parallel: {
        std::int64_t r = full - reclaim.global_uinact;
        std::int64_t floor_u = u * m;
        return r > floor_u ? r : floor_u;
    }
    case Mode::Sequential: {
        Bw pool = reclaim.per_cpu_uinact[static_cast<std::size_t>(cpu)];
        Bw r = kBwOne - pool;
        Bw applied = r > u ? r : u;
        return applied * m;
    }
    }
    return full;
}

/// Double view of the applied rate, for reports and tests.
inline double depletion_rate(const ReclaimState& reclaim, double u_i, int cpu, int m) {
    switch (reclaim.mode) {
    case Mode::None:
        return 1.0;
    case Mode::Parallel: {
        double r = 1.0 - bw_to_double(reclaim.global_uinact) / m;
        return r > u_i ? r : u_i;
    }
    case Mode::Sequential: {
        double r = 1.0 - bw_to_double(reclaim.per_cpu_uinact[static_cast<std::size_t>(cpu)]);
        return r > u_i ? r : u_i;
    }
    }
    return 1.0;
}

} // namespace grubsim

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grubsim/engine.hpp"
#include "grubsim/metrics.hpp"
#include "grubsim/model.hpp"

namespace grubsim {

/// Slow reference implementations used as test oracles. None of these
/// share simulation machinery with the engine: they recompute next
/// events by scanning, or step in fixed quanta.

/// Quantum-stepped whole-system simulator. With `tick_accounting` off it
/// is a brute-force discretization of the exact algorithm (budgets never
/// overshoot; events land on the next boundary). With it on, budgets are
/// charged lazily per quantum the way a tick-driven kernel does: they can
/// go negative by up to one quantum's worth and the overshoot carries
/// into the next replenishment.
RunResult quantum_sim(const SystemConfig& config, std::span<const TaskSpec> tasks,
                      std::span<const ServerParams> servers, std::vector<Job> jobs,
                      Time quantum, bool tick_accounting);

/// Plain multiprocessor CBS (no reclaiming, unit depletion rate),
/// scan-based. Given the same inputs it reproduces the engine's
/// mode=none traces exactly.
Trace cbs_reference(const SystemConfig& config, std::span<const TaskSpec> tasks,
                    std::span<const ServerParams> servers, std::vector<Job> jobs);

/// Single-processor GRUB: the budget of the executing server depletes at
/// 1 - (U_sys - U_act), where U_act sums the bandwidth of all
/// non-Inactive servers. With U_sys = 1 this is the algebraic reduction
/// of parallel reclaiming (with pool initialization) to one processor.
Trace grub_uniproc_reference(const SystemConfig& config, std::span<const TaskSpec> tasks,
                             std::span<const ServerParams> servers, std::vector<Job> jobs,
                             double u_sys = 1.0);

struct VirtualTimePoint {
    Time t = 0;
    double v = 0.0;
};

struct VirtualTimeSeries {
    int server = -1;
    std::vector<VirtualTimePoint> points;
};

struct VirtualTimeReport {
    std::vector<VirtualTimeSeries> series;
    std::vector<std::string> violations;
};

/// Reconstruct each server's virtual time from a trace:
///   v = d - q / U  while the server is active (any flavour),
///   v = t          while Inactive,
/// and flag decreases, discontinuities at transition instants, and
/// v > d while the server still owes work.
VirtualTimeReport track_virtual_time(const Trace& trace, std::span<const ServerParams> servers);

/// Structural trace checks: budget bounds, legal rule edges, rule-5
/// boundary conditions, inactive-bandwidth conservation (global and
/// per-cpu, exact), applied-rate bounds and work conservation. Returns
/// human-readable violation descriptions (empty means the trace is
/// consistent).
std::vector<std::string> check_trace_invariants(const Trace& trace,
                                                std::span<const ServerParams> servers,
                                                Bw init_global, std::span<const Bw> init_cpu);

/// Strict row-by-row equality (canonical lines).
bool traces_identical(const Trace& a, const Trace& b);

/// Equality of everything the scheduler decides (times, kinds, servers,
/// cpus, budgets, deadlines, states, job identities) while ignoring the
/// bookkeeping pools, which differently-formulated but equivalent
/// algorithms are allowed to track differently.
bool traces_schedule_equal(const Trace& a, const Trace& b);

struct DivergenceReport {
    Time max_event_shift = 0;     // matched same-kind events, per server
    double max_budget_shift = 0.0; // ticks, on matched rows
    std::int64_t unmatched = 0;    // per-key count differences
    std::string detail;
};

/// Match the k-th occurrence of each (server, kind) between two traces
/// and measure the largest timestamp and budget disagreement.
DivergenceReport compare_traces(const Trace& a, const Trace& b);

} // namespace grubsim

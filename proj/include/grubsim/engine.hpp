#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "grubsim/admission.hpp"
#include "grubsim/metrics.hpp"
#include "grubsim/model.hpp"
#include "grubsim/reclaim.hpp"

namespace grubsim {

/// Future event. Ordering at equal timestamps is fixed by class:
/// completions, then budget exhaustions, then zero-lag timers, then
/// replenishments, then arrivals; ties within a class break by server,
/// then by issue order. Dispatch runs once after each batch.
struct SimEvent {
    Time t = 0;
    int cls = 0;
    int server_idx = -1;
    std::uint64_t epoch = 0;
    std::int64_t seq = 0;
    std::int64_t payload = -1; // job index for arrivals

    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.t != b.t) return a.t > b.t;
            if (a.cls != b.cls) return a.cls > b.cls;
            if (a.server_idx != b.server_idx) return a.server_idx > b.server_idx;
            return a.seq > b.seq;
        }
    };
};

inline constexpr int kClsCompletion = 0;
inline constexpr int kClsExhausted = 1;
inline constexpr int kClsZeroLag = 2;
inline constexpr int kClsReplenish = 3;
inline constexpr int kClsArrival = 4;

/// Engine-internal tallies, kept independently of the trace so tests can
/// cross-check summarize() against them.
struct EngineCounters {
    std::int64_t released = 0;
    std::int64_t completed = 0;
    std::int64_t misses = 0;
    std::int64_t migrations = 0;
    std::int64_t preemptions = 0;
    Wide busy = 0;          // execution ticks over all processors
    Wide rate_weighted = 0; // sum rate_fp * dt
    Wide reclaimed = 0;     // sum (full - rate_fp) * dt
};

struct RunResult {
    Trace trace;
    RunMetrics metrics;
    EngineCounters counters;
    Bw init_uinact_global = 0;
    std::vector<Bw> init_uinact_cpu;
};

struct InitialPools {
    Bw global = 0;
    std::vector<Bw> per_cpu;
};

/// Initial inactive-bandwidth pools for a run. Zero unless the config
/// asks for initialization; then the parallel pool is the exact
/// fixed-point GFB slack m - (m-1) U_max - U (clamped to [0, m]) and the
/// sequential per-cpu pools are max{U_x', U_x''} (clamped to [0, 1]),
/// rounded down so the reclaimed bandwidth never exceeds the analysis
/// bound.
InitialPools compute_initial_pools(const SystemConfig& config,
                                   std::span<const ServerParams> servers);

/// Exact event-driven G-EDF simulation over m identical processors.
/// Budgets integrate piecewise-linearly between events in fixed-point
/// arithmetic; predicted exhaustion instants are pinned to the next
/// integer tick, everything else is exact.
class Engine {
public:
    Engine(SystemConfig config, std::vector<TaskSpec> tasks, std::vector<ServerParams> servers,
           std::vector<Job> jobs);

    RunResult run();

private:
    struct Issued {
        int server_idx = -1;
        std::uint64_t epoch = 0;
        std::int64_t rate_fp = 0;
    };

    void validate_inputs() const;
    void apply_initial_pools();
    void advance_to(Time t);
    void process_event(const SimEvent& ev);
    void dispatch(Time now);
    void refresh_predictions(Time now);
    void check_invariants(Time now) const;
    void push_event(Time t, int cls, int server_idx, std::uint64_t epoch, std::int64_t payload = -1);

    TraceRecord make_row(Time t, TraceKind kind, int server_idx, int cpu) const;
    int cpu_of(int server_idx) const;

    SystemConfig config_;
    std::vector<TaskSpec> tasks_;
    std::vector<ServerParams> server_params_;
    std::vector<Job> jobs_;

    std::vector<Server> servers_;
    ReclaimState reclaim_;
    std::vector<int> running_;            // cpu -> server index, -1 when idle
    std::vector<std::int64_t> cpu_rate_;  // fixed-point rate applied on each cpu
    std::vector<Issued> issued_;          // outstanding predictions per cpu
    std::priority_queue<SimEvent, std::vector<SimEvent>, SimEvent::Later> queue_;
    std::int64_t seq_ = 0;
    Time clock_ = 0;

    TraceLog log_;
    EngineCounters counters_;
    Bw init_global_ = 0;
    std::vector<Bw> init_cpu_;
};

/// Convenience wrapper: validates, runs, and summarizes in one call.
RunResult run_simulation(const SystemConfig& config, std::vector<TaskSpec> tasks,
                         std::vector<ServerParams> servers, std::vector<Job> jobs);

} // namespace grubsim

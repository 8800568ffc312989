#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "grubsim/model.hpp"

namespace grubsim {

enum class TraceKind {
    Arrival,
    Completion,
    Exhausted,
    Replenish,
    ZeroLag,
    Dispatch,
    Preempt,
};

std::string to_string(TraceKind kind);
TraceKind trace_kind_from_string(const std::string& s);

/// One trace row. Snapshots are taken after the event's effect: `q_units`
/// is the budget in tick/(kBwOne*m) units, `uinact*` the reclaimable pool.
struct TraceRecord {
    Time t = 0;
    TraceKind kind = TraceKind::Arrival;
    int server = -1;
    int cpu = -1;
    Wide q_units = 0;
    Time d = 0;
    ServerPhase state = ServerPhase::Inactive;
    Bw uinact_global = 0;
    std::vector<Bw> uinact_cpu; // sequential mode only
    std::int64_t job_index = -1;
    Time job_arrival = 0;
    Time job_deadline = 0;
    bool migrated = false;

    /// Canonical serialized form; equality of two traces is equality of
    /// these lines.
    std::string canonical_line() const;
    bool operator==(const TraceRecord& other) const;
};

struct TraceMeta {
    int version = 1;
    int m = 1;
    Mode mode = Mode::None;
    bool init_reclaim = false;
    Time horizon = 0;
    std::uint64_t seed = 0;
};

struct Trace {
    TraceMeta meta;
    std::vector<TraceRecord> records;
};

/// Append-only trace sink; rejects time going backwards.
class TraceLog {
public:
    explicit TraceLog(TraceMeta meta) { trace_.meta = meta; }

    const TraceRecord& record(TraceRecord row);
    Trace take() { return std::move(trace_); }
    const Trace& trace() const { return trace_; }

private:
    Trace trace_;
    Time last_time_ = 0;
};

struct TaskMetrics {
    int task_id = 0;
    std::int64_t released = 0;
    std::int64_t completed = 0;
    std::int64_t misses = 0;
    Time max_tardiness = 0;
    Time max_response = 0;
    double mean_response = 0.0;
};

struct RunMetrics {
    std::vector<TaskMetrics> per_task;
    std::int64_t released = 0;
    std::int64_t completed = 0;
    std::int64_t misses = 0;
    double miss_pct = 0.0; // over jobs completed by the horizon; pending jobs excluded
    std::int64_t migrations = 0;
    std::int64_t preemptions = 0;
    double mean_rate = 1.0;      // time-weighted over execution intervals
    double reclaimed_total = 0.0; // budget-ticks saved: sum (1 - rate) * interval
    double busy_time = 0.0;      // total execution ticks across processors
};

/// Rebuild aggregate statistics from a trace. A deadline miss is a job
/// whose completion record is later than its absolute deadline; jobs
/// still pending at the horizon are excluded from both sides of the miss
/// ratio. Rates are reconstructed exactly from the uinact snapshots.
RunMetrics summarize(const Trace& trace, std::span<const TaskSpec> tasks,
                     std::span<const ServerParams> servers);

void write_trace_ndjson(const Trace& trace, std::ostream& out);
Trace read_trace_ndjson(std::istream& in);

void write_metrics_csv(const RunMetrics& metrics, std::ostream& out);

} // namespace grubsim

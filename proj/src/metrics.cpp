#include "grubsim/metrics.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace grubsim {

std::string to_string(TraceKind kind) {
    switch (kind) {
    case TraceKind::Arrival: return "arrival";
    case TraceKind::Completion: return "completion";
    case TraceKind::Exhausted: return "exhausted";
    case TraceKind::Replenish: return "replenish";
    case TraceKind::ZeroLag: return "zerolag";
    case TraceKind::Dispatch: return "dispatch";
    case TraceKind::Preempt: return "preempt";
    }
    return "arrival";
}

TraceKind trace_kind_from_string(const std::string& s) {
    if (s == "arrival") return TraceKind::Arrival;
    if (s == "completion") return TraceKind::Completion;
    if (s == "exhausted") return TraceKind::Exhausted;
    if (s == "replenish") return TraceKind::Replenish;
    if (s == "zerolag") return TraceKind::ZeroLag;
    if (s == "dispatch") return TraceKind::Dispatch;
    if (s == "preempt") return TraceKind::Preempt;
    throw ConfigError("unknown trace kind: " + s);
}

std::string TraceRecord::canonical_line() const {
    std::ostringstream os;
    os << "{\"t\":" << t
       << ",\"kind\":\"" << to_string(kind) << '"'
       << ",\"server\":" << server
       << ",\"cpu\":" << cpu
       << ",\"q\":\"" << wide_to_string(q_units) << '"'
       << ",\"d\":" << d
       << ",\"state\":\"" << to_string(state) << '"'
       << ",\"uinact\":" << uinact_global
       << ",\"uinact_cpu\":[";
    for (std::size_t i = 0; i < uinact_cpu.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << uinact_cpu[i];
    }
    os << "],\"job\":" << job_index
       << ",\"job_arrival\":" << job_arrival
       << ",\"job_deadline\":" << job_deadline
       << ",\"migrated\":" << (migrated ? 1 : 0)
       << '}';
    return os.str();
}

bool TraceRecord::operator==(const TraceRecord& other) const {
    return t == other.t && kind == other.kind && server == other.server && cpu == other.cpu &&
           q_units == other.q_units && d == other.d && state == other.state &&
           uinact_global == other.uinact_global && uinact_cpu == other.uinact_cpu &&
           job_index == other.job_index && job_arrival == other.job_arrival &&
           job_deadline == other.job_deadline && migrated == other.migrated;
}

const TraceRecord& TraceLog::record(TraceRecord row) {
    if (row.t < last_time_) {
        throw EngineInvariantViolation("trace time went backwards");
    }
    last_time_ = row.t;
    trace_.records.push_back(std::move(row));
    return trace_.records.back();
}

namespace {

struct RateAccumulator {
    Wide busy = 0;           // ticks, scaled by 1
    Wide rate_weighted = 0;  // rate_fp * ticks
    Wide reclaimed = 0;      // (full - rate_fp) * ticks

    void add(Time dt, std::int64_t rate_fp, std::int64_t full) {
        busy += dt;
        rate_weighted += static_cast<Wide>(rate_fp) * dt;
        reclaimed += static_cast<Wide>(full - rate_fp) * dt;
    }
};

} // namespace

RunMetrics summarize(const Trace& trace, std::span<const TaskSpec> tasks,
                     std::span<const ServerParams> servers) {
    const int m = trace.meta.m;
    const std::int64_t full = static_cast<std::int64_t>(kBwOne) * m;

    std::map<int, Bw> bandwidth;
    for (const auto& s : servers) {
        bandwidth[s.id] = s.bandwidth_fp();
    }
    std::map<int, TaskMetrics> per_task;
    std::map<int, double> response_sum;
    for (const auto& t : tasks) {
        per_task[t.id] = TaskMetrics{t.id};
        response_sum[t.id] = 0.0;
    }

    RunMetrics out;
    std::vector<int> running(static_cast<std::size_t>(m), -1);
    ReclaimState reclaim = ReclaimState::make(trace.meta.mode, m);
    RateAccumulator acc;
    Time cursor = 0;
    bool have_state = false;

    auto settle_to = [&](Time t) {
        if (!have_state) {
            cursor = t;
            have_state = true;
            return;
        }
        Time dt = t - cursor;
        if (dt > 0) {
            for (int cpu = 0; cpu < m; ++cpu) {
                int sid = running[static_cast<std::size_t>(cpu)];
                if (sid < 0) {
                    continue;
                }
                acc.add(dt, depletion_rate_fp(reclaim, bandwidth.at(sid), cpu, m), full);
            }
        }
        cursor = t;
    };

    for (const auto& rec : trace.records) {
        settle_to(rec.t);
        // Pool snapshots first: the rate for intervals after this instant
        // uses the post-event pools.
        reclaim.global_uinact = rec.uinact_global;
        if (trace.meta.mode == Mode::Sequential && !rec.uinact_cpu.empty()) {
            reclaim.per_cpu_uinact = rec.uinact_cpu;
        }
        switch (rec.kind) {
        case TraceKind::Arrival: {
            auto& tm = per_task.at(rec.server);
            tm.released += 1;
            break;
        }
        case TraceKind::Completion: {
            auto& tm = per_task.at(rec.server);
            tm.completed += 1;
            Time response = rec.t - rec.job_arrival;
            tm.max_response = std::max(tm.max_response, response);
            response_sum.at(rec.server) += static_cast<double>(response);
            if (rec.t > rec.job_deadline) {
                tm.misses += 1;
                tm.max_tardiness = std::max(tm.max_tardiness, rec.t - rec.job_deadline);
            }
            if (rec.state != ServerPhase::ActiveContending && rec.cpu >= 0) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            break;
        }
        case TraceKind::Exhausted:
            if (rec.cpu >= 0) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            break;
        case TraceKind::Replenish:
        case TraceKind::ZeroLag:
            break;
        case TraceKind::Dispatch:
            if (rec.cpu >= 0) {
                running[static_cast<std::size_t>(rec.cpu)] = rec.server;
            }
            if (rec.migrated) {
                out.migrations += 1;
            }
            break;
        case TraceKind::Preempt:
            if (rec.cpu >= 0 && running[static_cast<std::size_t>(rec.cpu)] == rec.server) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            out.preemptions += 1;
            break;
        }
    }
    settle_to(trace.meta.horizon);

    for (auto& [id, tm] : per_task) {
        if (tm.completed > 0) {
            tm.mean_response = response_sum.at(id) / static_cast<double>(tm.completed);
        }
        out.released += tm.released;
        out.completed += tm.completed;
        out.misses += tm.misses;
        out.per_task.push_back(tm);
    }
    out.miss_pct = out.completed > 0
                       ? 100.0 * static_cast<double>(out.misses) / static_cast<double>(out.completed)
                       : 0.0;
    const double scale = static_cast<double>(full);
    out.busy_time = static_cast<double>(acc.busy);
    out.mean_rate = acc.busy > 0
                        ? static_cast<double>(acc.rate_weighted) / (scale * static_cast<double>(acc.busy))
                        : 1.0;
    out.reclaimed_total = static_cast<double>(acc.reclaimed) / scale;
    return out;
}

void write_trace_ndjson(const Trace& trace, std::ostream& out) {
    out << "{\"kind\":\"meta\",\"version\":" << trace.meta.version
        << ",\"m\":" << trace.meta.m
        << ",\"mode\":\"" << to_string(trace.meta.mode) << '"'
        << ",\"init_reclaim\":" << (trace.meta.init_reclaim ? 1 : 0)
        << ",\"horizon\":" << trace.meta.horizon
        << ",\"seed\":" << trace.meta.seed
        << "}\n";
    for (const auto& rec : trace.records) {
        out << rec.canonical_line() << '\n';
    }
}

Trace read_trace_ndjson(std::istream& in) {
    Trace trace;
    std::string line;
    bool have_meta = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed trace line: ") + e.what());
        }
        if (!have_meta) {
            if (j.value("kind", "") != "meta") {
                throw ConfigError("trace must start with a meta record");
            }
            trace.meta.version = j.at("version").get<int>();
            trace.meta.m = j.at("m").get<int>();
            trace.meta.mode = mode_from_string(j.at("mode").get<std::string>());
            trace.meta.init_reclaim = j.at("init_reclaim").get<int>() != 0;
            trace.meta.horizon = j.at("horizon").get<Time>();
            trace.meta.seed = j.at("seed").get<std::uint64_t>();
            have_meta = true;
            continue;
        }
        TraceRecord rec;
        rec.t = j.at("t").get<Time>();
        rec.kind = trace_kind_from_string(j.at("kind").get<std::string>());
        rec.server = j.at("server").get<int>();
        rec.cpu = j.at("cpu").get<int>();
        rec.q_units = wide_from_string(j.at("q").get<std::string>());
        rec.d = j.at("d").get<Time>();
        rec.state = phase_from_string(j.at("state").get<std::string>());
        rec.uinact_global = j.at("uinact").get<Bw>();
        rec.uinact_cpu = j.at("uinact_cpu").get<std::vector<Bw>>();
        rec.job_index = j.at("job").get<std::int64_t>();
        rec.job_arrival = j.at("job_arrival").get<Time>();
        rec.job_deadline = j.at("job_deadline").get<Time>();
        rec.migrated = j.at("migrated").get<int>() != 0;
        trace.records.push_back(std::move(rec));
    }
    if (!have_meta) {
        throw ConfigError("empty trace stream");
    }
    return trace;
}

void write_metrics_csv(const RunMetrics& metrics, std::ostream& out) {
    out << "scope,task_id,released,completed,misses,miss_pct,max_tardiness_ns,"
           "max_response_ns,mean_response_ns,migrations,preemptions,mean_rate,"
           "reclaimed_ns,busy_ns\n";
    for (const auto& tm : metrics.per_task) {
        double pct = tm.completed > 0
                         ? 100.0 * static_cast<double>(tm.misses) / static_cast<double>(tm.completed)
                         : 0.0;
        out << "task," << tm.task_id << ',' << tm.released << ',' << tm.completed << ','
            << tm.misses << ',' << pct << ',' << tm.max_tardiness << ',' << tm.max_response << ','
            << tm.mean_response << ",,,,,\n";
    }
    out << "total,," << metrics.released << ',' << metrics.completed << ',' << metrics.misses
        << ',' << metrics.miss_pct << ",,,," << metrics.migrations << ',' << metrics.preemptions
        << ',' << metrics.mean_rate << ',' << metrics.reclaimed_total << ',' << metrics.busy_time
        << '\n';
}

} // namespace grubsim

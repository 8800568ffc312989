#include "grubsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <sstream>

namespace grubsim {

namespace {

constexpr Time kNever = std::numeric_limits<Time>::max();

struct RefServer {
    ServerParams params;
    Bw u = 0;
    Wide q = 0; // tick/(kBwOne * m) units, same scale the engine traces use
    Wide max_q = 0;
    Time d = 0;
    ServerPhase phase = ServerPhase::Inactive;
    std::deque<Job> queue;
    int last_cpu = -1;
    bool stored = false;
    int stored_cpu = -1;
    Time replenish_at = kNever;
};

std::vector<RefServer> make_ref_servers(std::span<const ServerParams> servers, int m) {
    std::vector<RefServer> out;
    out.reserve(servers.size());
    for (const auto& p : servers) {
        RefServer s;
        s.params = p;
        s.u = p.bandwidth_fp();
        s.max_q = static_cast<Wide>(p.max_budget) * kBwOne * m;
        out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(),
              [](const RefServer& a, const RefServer& b) { return a.params.id < b.params.id; });
    return out;
}

std::vector<Job> sorted_jobs(std::vector<Job> jobs) {
    std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        if (a.arrival != b.arrival) return a.arrival < b.arrival;
        return a.task_id < b.task_id;
    });
    return jobs;
}

/// Scan-based reference for the two fixed-rate baselines: plain
/// multiprocessor CBS (rate 1) and single-processor GRUB (rate
/// 1 - (U_sys - U_act)). No event queue, no prediction bookkeeping:
/// every step rescans the state for the next instant of interest.
class ReferenceSimulator {
public:
    enum class Kind { PlainCbs, GrubUniproc };

    ReferenceSimulator(Kind kind, const SystemConfig& config,
                       std::span<const ServerParams> servers, std::vector<Job> jobs,
                       double u_sys)
        : kind_(kind),
          config_(config),
          servers_(make_ref_servers(servers, config.m)),
          jobs_(sorted_jobs(std::move(jobs))),
          running_(static_cast<std::size_t>(config.m), -1),
          log_(TraceMeta{1, config.m, config.mode, config.init_reclaim, config.horizon,
                         config.seed}) {
        if (kind_ == Kind::GrubUniproc) {
            if (config.m != 1) {
                throw ConfigError("the GRUB reference is single-processor");
            }
            u_sys_ = static_cast<Bw>(std::llround(u_sys * static_cast<double>(kBwOne)));
        }
    }

    Trace run() {
        while (true) {
            Time t = next_instant();
            if (t == kNever || t > config_.horizon) {
                break;
            }
            advance_to(t);
            process_instant(t);
            dispatch(t);
        }
        return log_.take();
    }

private:
    std::int64_t rate_for(const RefServer& s) const {
        if (kind_ == Kind::PlainCbs) {
            return static_cast<std::int64_t>(kBwOne) * config_.m;
        }
        Bw rate = kBwOne - (u_sys_ - u_act_);
        if (rate <= 0 || rate > kBwOne) {
            throw EngineInvariantViolation("GRUB reference rate out of range");
        }
        (void)s;
        return rate;
    }

    Time zero_lag_of(const RefServer& s) const {
        Wide lag = s.q / (static_cast<Wide>(s.u) * config_.m);
        return s.d - static_cast<Time>(lag);
    }

    Time next_instant() const {
        Time t = kNever;
        if (job_cursor_ < jobs_.size()) {
            t = std::min(t, jobs_[job_cursor_].arrival);
        }
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            int idx = running_[static_cast<std::size_t>(cpu)];
            if (idx < 0) {
                continue;
            }
            const RefServer& s = servers_[static_cast<std::size_t>(idx)];
            t = std::min(t, clock_ + s.queue.front().exec_remaining);
            t = std::min(t, clock_ + static_cast<Time>(ceil_div(s.q, rate_for(s))));
        }
        for (const auto& s : servers_) {
            if (s.phase == ServerPhase::ActiveNonContending) {
                t = std::min(t, std::max(zero_lag_of(s), clock_));
            } else if (s.phase == ServerPhase::Recharging) {
                t = std::min(t, s.replenish_at);
            }
        }
        return t;
    }

    void advance_to(Time t) {
        Time dt = t - clock_;
        if (dt < 0) {
            throw EngineInvariantViolation("reference clock went backwards");
        }
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            int idx = running_[static_cast<std::size_t>(cpu)];
            if (idx < 0) {
                continue;
            }
            RefServer& s = servers_[static_cast<std::size_t>(idx)];
            Wide used = static_cast<Wide>(rate_for(s)) * dt;
            if (used > s.q) {
                if (used - s.q >= rate_for(s)) {
                    throw EngineInvariantViolation("reference budget crossed zero mid-interval");
                }
                s.q = 0;
            } else {
                s.q -= used;
            }
            s.queue.front().exec_remaining -= dt;
        }
        clock_ = t;
    }

    TraceRecord row(Time t, TraceKind kind, const RefServer& s, int cpu) const {
        TraceRecord rec;
        rec.t = t;
        rec.kind = kind;
        rec.server = s.params.id;
        rec.cpu = cpu;
        rec.q_units = s.q;
        rec.d = s.d;
        rec.state = s.phase;
        rec.uinact_global = kind_ == Kind::GrubUniproc ? u_sys_ - u_act_ : 0;
        return rec;
    }

    int cpu_of(int idx) const {
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            if (running_[static_cast<std::size_t>(cpu)] == idx) {
                return cpu;
            }
        }
        return -1;
    }

    void go_inactive(RefServer& s) {
        s.phase = ServerPhase::Inactive;
        s.stored = true;
        s.stored_cpu = s.last_cpu;
        if (kind_ == Kind::GrubUniproc) {
            u_act_ -= s.u;
        }
    }

    void process_instant(Time t) {
        // Completions, by server id.
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            RefServer& s = servers_[i];
            int cpu = cpu_of(static_cast<int>(i));
            if (cpu < 0 || s.phase != ServerPhase::ActiveContending ||
                s.queue.front().exec_remaining != 0) {
                continue;
            }
            Job done = s.queue.front();
            s.queue.pop_front();
            TraceRecord rec;
            if (!s.queue.empty()) {
                rec = row(t, TraceKind::Completion, s, cpu); // stays contending
            } else {
                Wide boundary = static_cast<Wide>(s.d - t) * s.u * config_.m;
                s.phase = ServerPhase::ActiveNonContending;
                rec = row(t, TraceKind::Completion, s, cpu);
                if (s.q >= boundary) {
                    go_inactive(s);
                }
            }
            rec.job_index = done.index;
            rec.job_arrival = done.arrival;
            rec.job_deadline = done.abs_deadline;
            log_.record(std::move(rec));
            if (s.phase == ServerPhase::Inactive) {
                log_.record(row(t, TraceKind::ZeroLag, s, cpu));
            }
        }
        // Budget exhaustions.
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            RefServer& s = servers_[i];
            int cpu = cpu_of(static_cast<int>(i));
            if (cpu < 0 || s.phase != ServerPhase::ActiveContending || s.q != 0) {
                continue;
            }
            s.phase = ServerPhase::Recharging;
            s.replenish_at = std::max(t, s.d);
            log_.record(row(t, TraceKind::Exhausted, s, cpu));
        }
        // Zero-lag instants.
        for (auto& s : servers_) {
            if (s.phase == ServerPhase::ActiveNonContending && zero_lag_of(s) <= t) {
                if (zero_lag_of(s) < t) {
                    throw EngineInvariantViolation("reference missed a zero-lag instant");
                }
                go_inactive(s);
                log_.record(row(t, TraceKind::ZeroLag, s, -1));
            }
        }
        // Replenishments.
        for (auto& s : servers_) {
            if (s.phase == ServerPhase::Recharging && s.replenish_at == t) {
                s.d += s.params.period;
                s.q = s.max_q;
                s.phase = ServerPhase::ActiveContending;
                s.replenish_at = kNever;
                log_.record(row(t, TraceKind::Replenish, s, -1));
            }
        }
        // Arrivals.
        while (job_cursor_ < jobs_.size() && jobs_[job_cursor_].arrival == t) {
            const Job& job = jobs_[job_cursor_++];
            auto it = std::find_if(servers_.begin(), servers_.end(), [&](const RefServer& s) {
                return s.params.id == job.task_id;
            });
            RefServer& s = *it;
            switch (s.phase) {
            case ServerPhase::Inactive:
                s.queue.push_back(job);
                s.q = s.max_q;
                s.d = t + s.params.period;
                s.phase = ServerPhase::ActiveContending;
                if (s.stored) {
                    s.stored = false;
                    s.stored_cpu = -1;
                }
                if (kind_ == Kind::GrubUniproc) {
                    u_act_ += s.u;
                }
                break;
            case ServerPhase::ActiveNonContending:
                s.queue.push_back(job);
                s.phase = ServerPhase::ActiveContending;
                break;
            case ServerPhase::ActiveContending:
            case ServerPhase::Recharging:
                s.queue.push_back(job);
                break;
            }
            TraceRecord rec = row(t, TraceKind::Arrival, s, -1);
            rec.job_index = job.index;
            rec.job_arrival = job.arrival;
            rec.job_deadline = job.abs_deadline;
            log_.record(std::move(rec));
        }
    }

    void dispatch(Time t) {
        std::vector<int> ready;
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            if (servers_[i].phase == ServerPhase::ActiveContending) {
                ready.push_back(static_cast<int>(i));
            }
        }
        std::sort(ready.begin(), ready.end(), [this](int a, int b) {
            const RefServer& sa = servers_[static_cast<std::size_t>(a)];
            const RefServer& sb = servers_[static_cast<std::size_t>(b)];
            if (sa.d != sb.d) return sa.d < sb.d;
            return sa.params.id < sb.params.id;
        });
        const std::size_t k = std::min(ready.size(), static_cast<std::size_t>(config_.m));
        std::vector<bool> in_top(servers_.size(), false);
        for (std::size_t i = 0; i < k; ++i) {
            in_top[static_cast<std::size_t>(ready[i])] = true;
        }
        std::vector<bool> placed(servers_.size(), false);
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            int occ = running_[static_cast<std::size_t>(cpu)];
            if (occ < 0) {
                continue;
            }
            RefServer& s = servers_[static_cast<std::size_t>(occ)];
            if (s.phase == ServerPhase::ActiveContending && in_top[static_cast<std::size_t>(occ)]) {
                placed[static_cast<std::size_t>(occ)] = true;
                continue;
            }
            if (s.phase == ServerPhase::ActiveContending) {
                log_.record(row(t, TraceKind::Preempt, s, cpu));
            }
            running_[static_cast<std::size_t>(cpu)] = -1;
        }
        for (std::size_t i = 0; i < k; ++i) {
            int idx = ready[i];
            if (placed[static_cast<std::size_t>(idx)]) {
                continue;
            }
            int target = -1;
            for (int cpu = 0; cpu < config_.m; ++cpu) {
                if (running_[static_cast<std::size_t>(cpu)] < 0) {
                    target = cpu;
                    break;
                }
            }
            RefServer& s = servers_[static_cast<std::size_t>(idx)];
            const bool migrated = s.last_cpu >= 0 && s.last_cpu != target;
            running_[static_cast<std::size_t>(target)] = idx;
            s.last_cpu = target;
            TraceRecord rec = row(t, TraceKind::Dispatch, s, target);
            rec.migrated = migrated;
            rec.job_index = s.queue.front().index;
            rec.job_arrival = s.queue.front().arrival;
            rec.job_deadline = s.queue.front().abs_deadline;
            log_.record(std::move(rec));
        }
    }

    Kind kind_;
    SystemConfig config_;
    std::vector<RefServer> servers_;
    std::vector<Job> jobs_;
    std::size_t job_cursor_ = 0;
    std::vector<int> running_;
    Time clock_ = 0;
    Bw u_sys_ = kBwOne;
    Bw u_act_ = 0;
    TraceLog log_;
};

/// Fixed-quantum discretization of the whole system. All rule updates
/// happen at quantum boundaries; between boundaries budgets either stop
/// at zero (exact mode) or are charged the full quantum the way a
/// tick-driven kernel accounts runtime (tick mode).
class QuantumSimulator {
public:
    QuantumSimulator(const SystemConfig& config, std::span<const ServerParams> servers,
                     std::vector<Job> jobs, Time quantum, bool tick_accounting)
        : config_(config),
          servers_(make_ref_servers(servers, config.m)),
          jobs_(sorted_jobs(std::move(jobs))),
          quantum_(quantum),
          tick_accounting_(tick_accounting),
          reclaim_(ReclaimState::make(config.mode, config.m)),
          running_(static_cast<std::size_t>(config.m), -1),
          log_(TraceMeta{1, config.m, config.mode, config.init_reclaim, config.horizon,
                         config.seed}) {
        if (quantum_ < 1) {
            throw ConfigError("quantum must be at least one tick");
        }
        InitialPools pools = compute_initial_pools(config, servers);
        reclaim_.global_uinact = pools.global;
        if (config.mode == Mode::Sequential) {
            reclaim_.per_cpu_uinact = pools.per_cpu;
        }
    }

    Trace run() {
        for (Time t = 0; t <= config_.horizon; t += quantum_) {
            process_boundary(t);
            dispatch(t);
            Time step = std::min(quantum_, config_.horizon - t);
            if (step > 0) {
                execute(t, step);
            }
            if (t > config_.horizon - quantum_) {
                break;
            }
        }
        return log_.take();
    }

private:
    TraceRecord row(Time t, TraceKind kind, const RefServer& s, int cpu) const {
        TraceRecord rec;
        rec.t = t;
        rec.kind = kind;
        rec.server = s.params.id;
        rec.cpu = cpu;
        rec.q_units = s.q;
        rec.d = s.d;
        rec.state = s.phase;
        rec.uinact_global = reclaim_.global_uinact;
        rec.uinact_cpu = reclaim_.per_cpu_uinact;
        return rec;
    }

    int cpu_of(int idx) const {
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            if (running_[static_cast<std::size_t>(cpu)] == idx) {
                return cpu;
            }
        }
        return -1;
    }

    void go_inactive(RefServer& s) {
        s.phase = ServerPhase::Inactive;
        s.stored = true;
        s.stored_cpu = s.last_cpu;
        reclaim_.store(s.u, s.last_cpu);
    }

    void process_boundary(Time t) {
        // Completions.
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            RefServer& s = servers_[i];
            if (s.phase != ServerPhase::ActiveContending || s.queue.empty() ||
                s.queue.front().exec_remaining != 0) {
                continue;
            }
            int cpu = cpu_of(static_cast<int>(i));
            Job done = s.queue.front();
            s.queue.pop_front();
            TraceRecord rec;
            if (!s.queue.empty()) {
                rec = row(t, TraceKind::Completion, s, cpu);
            } else {
                Wide boundary = static_cast<Wide>(s.d - t) * s.u * config_.m;
                s.phase = ServerPhase::ActiveNonContending;
                rec = row(t, TraceKind::Completion, s, cpu);
                if (s.q >= boundary) {
                    go_inactive(s);
                }
            }
            rec.job_index = done.index;
            rec.job_arrival = done.arrival;
            rec.job_deadline = done.abs_deadline;
            log_.record(std::move(rec));
            if (s.phase == ServerPhase::Inactive) {
                log_.record(row(t, TraceKind::ZeroLag, s, cpu));
            }
        }
        // Exhaustions (tick mode can observe a negative budget here).
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            RefServer& s = servers_[i];
            if (s.phase != ServerPhase::ActiveContending || s.q > 0) {
                continue;
            }
            s.phase = ServerPhase::Recharging;
            s.replenish_at = std::max(t, s.d);
            log_.record(row(t, TraceKind::Exhausted, s, cpu_of(static_cast<int>(i))));
        }
        // Zero-lag boundary checks.
        for (auto& s : servers_) {
            if (s.phase != ServerPhase::ActiveNonContending) {
                continue;
            }
            Wide boundary = static_cast<Wide>(s.d - t) * s.u * config_.m;
            if (s.q >= boundary) {
                go_inactive(s);
                log_.record(row(t, TraceKind::ZeroLag, s, -1));
            }
        }
        // Replenishments.
        for (auto& s : servers_) {
            if (s.phase != ServerPhase::Recharging || t < s.replenish_at) {
                continue;
            }
            if (tick_accounting_) {
                // Kernel-style: the overshoot carries, one period per refill.
                s.d += s.params.period;
                s.q += s.max_q;
                while (s.q <= 0) {
                    s.d += s.params.period;
                    s.q += s.max_q;
                }
            } else {
                s.d += s.params.period;
                s.q = s.max_q;
            }
            s.phase = ServerPhase::ActiveContending;
            s.replenish_at = kNever;
            log_.record(row(t, TraceKind::Replenish, s, -1));
        }
        // Arrivals up to this boundary.
        while (job_cursor_ < jobs_.size() && jobs_[job_cursor_].arrival <= t) {
            const Job& job = jobs_[job_cursor_++];
            auto it = std::find_if(servers_.begin(), servers_.end(), [&](const RefServer& s) {
                return s.params.id == job.task_id;
            });
            RefServer& s = *it;
            switch (s.phase) {
            case ServerPhase::Inactive:
                s.queue.push_back(job);
                s.q = s.max_q;
                s.d = t + s.params.period;
                s.phase = ServerPhase::ActiveContending;
                if (s.stored) {
                    reclaim_.recover(s.u, s.stored_cpu);
                    s.stored = false;
                    s.stored_cpu = -1;
                }
                break;
            case ServerPhase::ActiveNonContending:
                s.queue.push_back(job);
                s.phase = ServerPhase::ActiveContending;
                break;
            case ServerPhase::ActiveContending:
            case ServerPhase::Recharging:
                s.queue.push_back(job);
                break;
            }
            TraceRecord rec = row(t, TraceKind::Arrival, s, -1);
            rec.job_index = job.index;
            rec.job_arrival = job.arrival;
            rec.job_deadline = job.abs_deadline;
            log_.record(std::move(rec));
        }
    }

    void dispatch(Time t) {
        std::vector<int> ready;
        for (std::size_t i = 0; i < servers_.size(); ++i) {
            if (servers_[i].phase == ServerPhase::ActiveContending) {
                ready.push_back(static_cast<int>(i));
            }
        }
        std::sort(ready.begin(), ready.end(), [this](int a, int b) {
            const RefServer& sa = servers_[static_cast<std::size_t>(a)];
            const RefServer& sb = servers_[static_cast<std::size_t>(b)];
            if (sa.d != sb.d) return sa.d < sb.d;
            return sa.params.id < sb.params.id;
        });
        const std::size_t k = std::min(ready.size(), static_cast<std::size_t>(config_.m));
        std::vector<bool> in_top(servers_.size(), false);
        for (std::size_t i = 0; i < k; ++i) {
            in_top[static_cast<std::size_t>(ready[i])] = true;
        }
        std::vector<bool> placed(servers_.size(), false);
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            int occ = running_[static_cast<std::size_t>(cpu)];
            if (occ < 0) {
                continue;
            }
            RefServer& s = servers_[static_cast<std::size_t>(occ)];
            if (s.phase == ServerPhase::ActiveContending && in_top[static_cast<std::size_t>(occ)]) {
                placed[static_cast<std::size_t>(occ)] = true;
                continue;
            }
            if (s.phase == ServerPhase::ActiveContending) {
                log_.record(row(t, TraceKind::Preempt, s, cpu));
            }
            running_[static_cast<std::size_t>(cpu)] = -1;
        }
        for (std::size_t i = 0; i < k; ++i) {
            int idx = ready[i];
            if (placed[static_cast<std::size_t>(idx)]) {
                continue;
            }
            int target = -1;
            for (int cpu = 0; cpu < config_.m; ++cpu) {
                if (running_[static_cast<std::size_t>(cpu)] < 0) {
                    target = cpu;
                    break;
                }
            }
            RefServer& s = servers_[static_cast<std::size_t>(idx)];
            const bool migrated = s.last_cpu >= 0 && s.last_cpu != target;
            running_[static_cast<std::size_t>(target)] = idx;
            s.last_cpu = target;
            TraceRecord rec = row(t, TraceKind::Dispatch, s, target);
            rec.migrated = migrated;
            rec.job_index = s.queue.front().index;
            rec.job_arrival = s.queue.front().arrival;
            rec.job_deadline = s.queue.front().abs_deadline;
            log_.record(std::move(rec));
        }
    }

    void execute(Time /*t*/, Time step) {
        for (int cpu = 0; cpu < config_.m; ++cpu) {
            int idx = running_[static_cast<std::size_t>(cpu)];
            if (idx < 0) {
                continue;
            }
            RefServer& s = servers_[static_cast<std::size_t>(idx)];
            const std::int64_t rate = depletion_rate_fp(reclaim_, s.u, cpu, config_.m);
            Job& job = s.queue.front();
            if (tick_accounting_) {
                Time run = std::min(step, job.exec_remaining);
                s.q -= static_cast<Wide>(rate) * run; // may go negative
                job.exec_remaining -= run;
            } else {
                Time budget_limit = static_cast<Time>(ceil_div(s.q, rate));
                Time run = std::min({step, job.exec_remaining, budget_limit});
                Wide used = static_cast<Wide>(rate) * run;
                s.q = used > s.q ? 0 : s.q - used;
                job.exec_remaining -= run;
            }
        }
    }

    SystemConfig config_;
    std::vector<RefServer> servers_;
    std::vector<Job> jobs_;
    std::size_t job_cursor_ = 0;
    Time quantum_ = 1;
    bool tick_accounting_ = false;
    ReclaimState reclaim_;
    std::vector<int> running_;
    TraceLog log_;
};

} // namespace

RunResult quantum_sim(const SystemConfig& config, std::span<const TaskSpec> tasks,
                      std::span<const ServerParams> servers, std::vector<Job> jobs,
                      Time quantum, bool tick_accounting) {
    QuantumSimulator sim(config, servers, std::move(jobs), quantum, tick_accounting);
    RunResult result;
    result.trace = sim.run();
    result.metrics = summarize(result.trace, tasks, servers);
    return result;
}

Trace cbs_reference(const SystemConfig& config, std::span<const TaskSpec> /*tasks*/,
                    std::span<const ServerParams> servers, std::vector<Job> jobs) {
    SystemConfig cfg = config;
    cfg.mode = Mode::None;
    cfg.init_reclaim = false;
    ReferenceSimulator sim(ReferenceSimulator::Kind::PlainCbs, cfg, servers, std::move(jobs), 1.0);
    return sim.run();
}

Trace grub_uniproc_reference(const SystemConfig& config, std::span<const TaskSpec> /*tasks*/,
                             std::span<const ServerParams> servers, std::vector<Job> jobs,
                             double u_sys) {
    ReferenceSimulator sim(ReferenceSimulator::Kind::GrubUniproc, config, servers,
                           std::move(jobs), u_sys);
    return sim.run();
}

VirtualTimeReport track_virtual_time(const Trace& trace, std::span<const ServerParams> servers) {
    const int m = trace.meta.m;
    struct PerServer {
        Bw u = 0;
        double tol = 0.0;
        bool seen = false;
        double prev_v = 0.0;
        ServerPhase prev_state = ServerPhase::Inactive;
        std::size_t series_idx = 0;
    };
    std::map<int, PerServer> info;
    VirtualTimeReport report;
    for (const auto& p : servers) {
        PerServer ps;
        ps.u = p.bandwidth_fp();
        // Bandwidth quantization shifts d - q/U by at most P^2/(2 Q 2^32)
        // ticks at a (q, d) reset; the zero-lag tick rounding adds one.
        ps.tol = 2.0 + static_cast<double>(p.period) * static_cast<double>(p.period) /
                           (static_cast<double>(p.max_budget) * static_cast<double>(kBwOne));
        ps.series_idx = report.series.size();
        info[p.id] = ps;
        report.series.push_back(VirtualTimeSeries{p.id, {}});
    }

    auto flag = [&](Time t, int server, const std::string& what) {
        std::ostringstream os;
        os << "t=" << t << " server=" << server << ": " << what;
        report.violations.push_back(os.str());
    };
    auto period_of = [&](int id) -> Time {
        for (const auto& p : servers) {
            if (p.id == id) {
                return p.period;
            }
        }
        return 0;
    };

    for (const auto& rec : trace.records) {
        auto it = info.find(rec.server);
        if (it == info.end()) {
            flag(rec.t, rec.server, "trace references an unknown server");
            continue;
        }
        PerServer& ps = it->second;
        const double q_over_u =
            static_cast<double>(rec.q_units) / (static_cast<double>(ps.u) * m);
        const double v = rec.state == ServerPhase::Inactive
                             ? static_cast<double>(rec.t)
                             : static_cast<double>(rec.d) - q_over_u;
        report.series[ps.series_idx].points.push_back({rec.t, v});

        if (ps.seen && v < ps.prev_v - ps.tol) {
            flag(rec.t, rec.server, "virtual time decreased");
        }
        if (rec.state != ServerPhase::Inactive &&
            v > static_cast<double>(rec.d) + ps.tol) {
            flag(rec.t, rec.server, "virtual time ran past the server deadline");
        }
        // Continuity at the instants that reset or release (q, d).
        if (rec.kind == TraceKind::Replenish) {
            const double pre = static_cast<double>(rec.d) -
                               static_cast<double>(period_of(rec.server));
            if (std::abs(v - pre) > ps.tol) {
                flag(rec.t, rec.server, "virtual time jumped at replenishment");
            }
        } else if (rec.kind == TraceKind::Arrival && ps.seen &&
                   ps.prev_state == ServerPhase::Inactive) {
            if (std::abs(v - static_cast<double>(rec.t)) > ps.tol) {
                flag(rec.t, rec.server, "virtual time jumped at activation");
            }
        } else if (rec.kind == TraceKind::ZeroLag) {
            const double pre = static_cast<double>(rec.d) - q_over_u;
            if (std::abs(static_cast<double>(rec.t) - pre) > ps.tol) {
                flag(rec.t, rec.server, "virtual time jumped at the zero-lag release");
            }
        }
        ps.prev_v = v;
        ps.prev_state = rec.state;
        ps.seen = true;
    }
    return report;
}

std::vector<std::string> check_trace_invariants(const Trace& trace,
                                                std::span<const ServerParams> servers,
                                                Bw init_global, std::span<const Bw> init_cpu) {
    std::vector<std::string> out;
    const int m = trace.meta.m;
    const std::int64_t full = static_cast<std::int64_t>(kBwOne) * m;

    struct St {
        Bw u = 0;
        Wide max_q = 0;
        ServerPhase state = ServerPhase::Inactive;
        bool seen = false;
        Wide q = 0;
        bool stored = false;
        int stored_pool = -1;
    };
    std::map<int, St> st;
    for (const auto& p : servers) {
        St s;
        s.u = p.bandwidth_fp();
        s.max_q = static_cast<Wide>(p.max_budget) * kBwOne * m;
        st[p.id] = s;
    }

    auto flag = [&](Time t, const std::string& what) {
        out.push_back("t=" + std::to_string(t) + ": " + what);
    };

    ReclaimState pools = ReclaimState::make(trace.meta.mode, m);
    pools.global_uinact = init_global;
    if (trace.meta.mode == Mode::Sequential) {
        pools.per_cpu_uinact.assign(init_cpu.begin(), init_cpu.end());
    }
    std::vector<int> running(static_cast<std::size_t>(m), -1);
    Time cursor = 0;
    Time prev_t = -1;

    auto settle = [&](Time t) {
        Time dt = t - cursor;
        if (dt < 0) {
            flag(t, "time went backwards");
            return;
        }
        if (dt == 0) {
            return;
        }
        for (int cpu = 0; cpu < m; ++cpu) {
            int sid = running[static_cast<std::size_t>(cpu)];
            if (sid < 0) {
                continue;
            }
            St& s = st.at(sid);
            std::int64_t rate = depletion_rate_fp(pools, s.u, cpu, m);
            if (rate < s.u * m || rate > full) {
                flag(t, "applied rate outside [U_i, 1] for server " + std::to_string(sid));
            }
            s.q -= static_cast<Wide>(rate) * dt;
        }
        cursor = t;
    };

    auto conservation_ok = [&](const TraceRecord& rec) {
        if (trace.meta.mode == Mode::Parallel) {
            Bw expect = init_global;
            for (const auto& [id, s] : st) {
                if (s.stored) {
                    expect += s.u;
                }
            }
            if (rec.uinact_global != expect) {
                flag(rec.t, "global inactive bandwidth off conservation for server " +
                                std::to_string(rec.server));
            }
        } else if (trace.meta.mode == Mode::Sequential) {
            std::vector<Bw> expect(init_cpu.begin(), init_cpu.end());
            for (const auto& [id, s] : st) {
                if (s.stored && s.stored_pool >= 0) {
                    expect[static_cast<std::size_t>(s.stored_pool)] += s.u;
                }
            }
            if (rec.uinact_cpu != expect) {
                flag(rec.t, "per-cpu inactive bandwidth off conservation");
            }
        }
    };

    auto end_of_instant_checks = [&](Time t) {
        int contending = 0;
        int occupied = 0;
        for (const auto& [id, s] : st) {
            if (s.seen && s.state == ServerPhase::ActiveContending) {
                ++contending;
            }
        }
        for (int cpu = 0; cpu < m; ++cpu) {
            if (running[static_cast<std::size_t>(cpu)] >= 0) {
                ++occupied;
            }
        }
        if (occupied < std::min(contending, m)) {
            flag(t, "idle processor while contending servers wait");
        }
    };

    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const TraceRecord& rec = trace.records[i];
        if (prev_t >= 0 && rec.t != prev_t) {
            end_of_instant_checks(prev_t);
        }
        settle(rec.t);
        auto sit = st.find(rec.server);
        if (sit == st.end()) {
            flag(rec.t, "unknown server in trace");
            continue;
        }
        St& s = sit->second;
        ServerPhase prev_state = s.state;

        // Budget trajectory: rows either carry the settled value or one of
        // the rule resets.
        Wide expected = s.q;
        switch (rec.kind) {
        case TraceKind::Replenish:
        case TraceKind::Arrival:
            break; // may reset below
        default:
            if (expected < 0) {
                if (-expected >= full || rec.kind != TraceKind::Exhausted) {
                    flag(rec.t, "budget crossed zero between events for server " +
                                    std::to_string(rec.server));
                }
                expected = 0;
            }
            if (rec.q_units != expected) {
                flag(rec.t, "budget does not follow the declared rate for server " +
                                std::to_string(rec.server));
            }
            break;
        }

        // Legal rule edges per row kind.
        switch (rec.kind) {
        case TraceKind::Arrival: {
            bool ok = false;
            if (prev_state == ServerPhase::Inactive || !s.seen) {
                ok = rec.state == ServerPhase::ActiveContending; // rule 1
                if (rec.q_units != s.max_q) {
                    flag(rec.t, "rule-1 arrival without a full budget");
                }
                if (s.stored) {
                    s.stored = false;
                    s.stored_pool = -1;
                }
            } else if (prev_state == ServerPhase::ActiveNonContending) {
                ok = rec.state == ServerPhase::ActiveContending; // rule 4
                if (rec.q_units != s.q) {
                    flag(rec.t, "rule-4 arrival changed the budget");
                }
            } else {
                ok = rec.state == prev_state; // queued only
            }
            if (!ok) {
                flag(rec.t, "illegal arrival edge for server " + std::to_string(rec.server));
            }
            break;
        }
        case TraceKind::Completion:
            if (!(prev_state == ServerPhase::ActiveContending &&
                  (rec.state == ServerPhase::ActiveContending ||
                   rec.state == ServerPhase::ActiveNonContending))) {
                flag(rec.t, "illegal completion edge");
            }
            if (rec.state == ServerPhase::ActiveNonContending) {
                // Strict rule-5 bound, unless the composite release follows
                // at this same instant.
                bool composite = i + 1 < trace.records.size() &&
                                 trace.records[i + 1].t == rec.t &&
                                 trace.records[i + 1].kind == TraceKind::ZeroLag &&
                                 trace.records[i + 1].server == rec.server;
                Wide boundary = static_cast<Wide>(rec.d - rec.t) * s.u * m;
                if (!composite && rec.q_units >= boundary) {
                    flag(rec.t, "ActiveNonContending past the rule-5 boundary");
                }
            }
            if (rec.state != ServerPhase::ActiveContending && rec.cpu >= 0 &&
                running[static_cast<std::size_t>(rec.cpu)] == rec.server) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            break;
        case TraceKind::Exhausted:
            if (!(prev_state == ServerPhase::ActiveContending &&
                  rec.state == ServerPhase::Recharging)) {
                flag(rec.t, "illegal exhaustion edge");
            }
            if (rec.q_units != 0) {
                flag(rec.t, "exhaustion with budget left");
            }
            if (rec.cpu >= 0 && running[static_cast<std::size_t>(rec.cpu)] == rec.server) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            break;
        case TraceKind::Replenish:
            if (!(prev_state == ServerPhase::Recharging &&
                  rec.state == ServerPhase::ActiveContending)) {
                flag(rec.t, "illegal replenishment edge");
            }
            if (rec.q_units != s.max_q) {
                flag(rec.t, "replenishment without a full budget");
            }
            break;
        case TraceKind::ZeroLag: {
            if (!(prev_state == ServerPhase::ActiveNonContending &&
                  rec.state == ServerPhase::Inactive)) {
                flag(rec.t, "illegal zero-lag edge");
            }
            Wide boundary = static_cast<Wide>(rec.d - rec.t) * s.u * m;
            if (rec.q_units < boundary) {
                flag(rec.t, "zero-lag release before the rule-5 boundary");
            }
            break;
        }
        case TraceKind::Dispatch:
            if (rec.state != ServerPhase::ActiveContending) {
                flag(rec.t, "dispatch of a non-contending server");
            }
            if (rec.cpu >= 0) {
                running[static_cast<std::size_t>(rec.cpu)] = rec.server;
            }
            break;
        case TraceKind::Preempt:
            if (rec.state != ServerPhase::ActiveContending) {
                flag(rec.t, "preemption of a non-contending server");
            }
            if (rec.cpu >= 0 && running[static_cast<std::size_t>(rec.cpu)] == rec.server) {
                running[static_cast<std::size_t>(rec.cpu)] = -1;
            }
            break;
        }

        // Pool deltas: a zero-lag stores exactly U_i, a rule-1 arrival of a
        // stored server takes exactly U_i back from the same pool, nothing
        // else moves the pools.
        if (trace.meta.mode == Mode::Parallel) {
            Bw delta = rec.uinact_global - pools.global_uinact;
            if (rec.kind == TraceKind::ZeroLag) {
                if (delta != s.u) {
                    flag(rec.t, "zero-lag did not store exactly U_i");
                }
                s.stored = true;
            } else if (rec.kind == TraceKind::Arrival && delta != 0) {
                if (delta != -s.u) {
                    flag(rec.t, "activation did not recover exactly U_i");
                }
            } else if (rec.kind != TraceKind::ZeroLag && rec.kind != TraceKind::Arrival &&
                       delta != 0) {
                flag(rec.t, "pool changed outside rules 1 and 5");
            }
            pools.global_uinact = rec.uinact_global;
        } else if (trace.meta.mode == Mode::Sequential) {
            int changed = -1;
            Bw delta = 0;
            if (rec.uinact_cpu.size() == pools.per_cpu_uinact.size()) {
                for (std::size_t p = 0; p < rec.uinact_cpu.size(); ++p) {
                    if (rec.uinact_cpu[p] != pools.per_cpu_uinact[p]) {
                        if (changed >= 0) {
                            flag(rec.t, "more than one pool changed in a single event");
                        }
                        changed = static_cast<int>(p);
                        delta = rec.uinact_cpu[p] - pools.per_cpu_uinact[p];
                    }
                }
            }
            if (rec.kind == TraceKind::ZeroLag) {
                if (changed < 0 || delta != s.u) {
                    flag(rec.t, "zero-lag did not store exactly U_i in one pool");
                } else {
                    s.stored = true;
                    s.stored_pool = changed;
                }
            } else if (changed >= 0) {
                if (!(rec.kind == TraceKind::Arrival && delta == -s.u &&
                      changed == s.stored_pool)) {
                    flag(rec.t, "pool delta does not pair with the storing processor");
                }
            }
            pools.per_cpu_uinact = rec.uinact_cpu;
        }

        // Adopt the row's authoritative values.
        s.q = rec.q_units;
        s.state = rec.state;
        s.seen = true;
        if (s.q < 0 || s.q > s.max_q) {
            flag(rec.t, "budget outside [0, Q] for server " + std::to_string(rec.server));
        }
        if (rec.kind == TraceKind::Arrival && prev_state == ServerPhase::Inactive) {
            s.stored = false;
            s.stored_pool = -1;
        }
        conservation_ok(rec);
        prev_t = rec.t;
    }
    if (prev_t >= 0) {
        end_of_instant_checks(prev_t);
    }
    return out;
}

bool traces_identical(const Trace& a, const Trace& b) {
    if (a.records.size() != b.records.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (!(a.records[i] == b.records[i])) {
            return false;
        }
    }
    return true;
}

bool traces_schedule_equal(const Trace& a, const Trace& b) {
    if (a.records.size() != b.records.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const TraceRecord& x = a.records[i];
        const TraceRecord& y = b.records[i];
        if (!(x.t == y.t && x.kind == y.kind && x.server == y.server && x.cpu == y.cpu &&
              x.q_units == y.q_units && x.d == y.d && x.state == y.state &&
              x.job_index == y.job_index && x.job_arrival == y.job_arrival &&
              x.job_deadline == y.job_deadline && x.migrated == y.migrated)) {
            return false;
        }
    }
    return true;
}

DivergenceReport compare_traces(const Trace& a, const Trace& b) {
    const std::int64_t full = static_cast<std::int64_t>(kBwOne) * std::max(a.meta.m, 1);
    using Key = std::pair<int, TraceKind>;
    std::map<Key, std::vector<const TraceRecord*>> left, right;
    for (const auto& rec : a.records) {
        if (rec.kind == TraceKind::Dispatch || rec.kind == TraceKind::Preempt) {
            continue; // dispatch decisions are compared indirectly
        }
        left[{rec.server, rec.kind}].push_back(&rec);
    }
    for (const auto& rec : b.records) {
        if (rec.kind == TraceKind::Dispatch || rec.kind == TraceKind::Preempt) {
            continue;
        }
        right[{rec.server, rec.kind}].push_back(&rec);
    }
    DivergenceReport report;
    std::ostringstream detail;
    for (const auto& [key, xs] : left) {
        auto it = right.find(key);
        const std::vector<const TraceRecord*>* ys = it == right.end() ? nullptr : &it->second;
        std::size_t ny = ys ? ys->size() : 0;
        std::size_t matched = std::min(xs.size(), ny);
        report.unmatched += static_cast<std::int64_t>(
            xs.size() > ny ? xs.size() - ny : ny - xs.size());
        for (std::size_t k = 0; k < matched; ++k) {
            Time shift = std::abs(xs[k]->t - (*ys)[k]->t);
            if (shift > report.max_event_shift) {
                report.max_event_shift = shift;
                detail.str("");
                detail << "server " << key.first << ' ' << to_string(key.second) << " #" << k
                       << ": " << xs[k]->t << " vs " << (*ys)[k]->t;
            }
            double dq = std::abs(static_cast<double>(xs[k]->q_units - (*ys)[k]->q_units)) /
                        static_cast<double>(full);
            report.max_budget_shift = std::max(report.max_budget_shift, dq);
        }
    }
    for (const auto& [key, ys] : right) {
        if (!left.count(key)) {
            report.unmatched += static_cast<std::int64_t>(ys.size());
        }
    }
    report.detail = detail.str();
    return report;
}

} // namespace grubsim

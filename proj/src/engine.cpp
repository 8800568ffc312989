#include "grubsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace grubsim {

namespace {

TraceMeta make_meta(const SystemConfig& config) {
    TraceMeta meta;
    meta.m = config.m;
    meta.mode = config.mode;
    meta.init_reclaim = config.init_reclaim;
    meta.horizon = config.horizon;
    meta.seed = config.seed;
    return meta;
}

} // namespace

Engine::Engine(SystemConfig config, std::vector<TaskSpec> tasks, std::vector<ServerParams> servers,
               std::vector<Job> jobs)
    : config_(config),
      tasks_(std::move(tasks)),
      server_params_(std::move(servers)),
      jobs_(std::move(jobs)),
      reclaim_(ReclaimState::make(config.mode, config.m)),
      running_(static_cast<std::size_t>(config.m), -1),
      cpu_rate_(static_cast<std::size_t>(config.m), 0),
      issued_(static_cast<std::size_t>(config.m)),
      log_(make_meta(config)) {
    config_.validate();
    std::sort(server_params_.begin(), server_params_.end(),
              [](const ServerParams& a, const ServerParams& b) { return a.id < b.id; });
    validate_inputs();
    servers_.reserve(server_params_.size());
    for (const auto& p : server_params_) {
        servers_.emplace_back(p, config_.m);
    }
    apply_initial_pools();
}

void Engine::validate_inputs() const {
    std::map<int, const TaskSpec*> task_by_id;
    for (const auto& t : tasks_) {
        t.validate();
        if (!task_by_id.emplace(t.id, &t).second) {
            throw ConfigError("duplicate task id " + std::to_string(t.id));
        }
    }
    std::map<int, const ServerParams*> server_by_id;
    for (const auto& s : server_params_) {
        s.validate();
        if (!server_by_id.emplace(s.id, &s).second) {
            throw ConfigError("duplicate server id " + std::to_string(s.id));
        }
    }
    for (const auto& t : tasks_) {
        if (!server_by_id.count(t.id)) {
            throw ConfigError("task " + std::to_string(t.id) + " has no server");
        }
    }
    for (const auto& j : jobs_) {
        if (!server_by_id.count(j.task_id)) {
            throw ConfigError("job stream references unknown task " + std::to_string(j.task_id));
        }
        if (j.arrival < 0 || j.exec_total <= 0 || j.exec_remaining != j.exec_total) {
            throw ConfigError("malformed job in stream");
        }
    }
    if (config_.admission != AdmissionPolicy::Off) {
        auto verdict = evaluate_admission(server_params_, config_.m, config_.admission,
                                          config_.bcl_condition_b);
        if (!verdict.admitted) {
            throw ConfigError("server set rejected by admission policy " +
                              to_string(config_.admission));
        }
    }
}

InitialPools compute_initial_pools(const SystemConfig& config,
                                   std::span<const ServerParams> servers) {
    InitialPools pools;
    pools.per_cpu.assign(static_cast<std::size_t>(config.m), 0);
    if (!config.init_reclaim || config.mode == Mode::None) {
        return pools;
    }
    Bw sum_u = 0;
    Bw max_u = 0;
    for (const auto& s : servers) {
        sum_u += s.bandwidth_fp();
        max_u = std::max(max_u, s.bandwidth_fp());
    }
    const Bw full = static_cast<Bw>(config.m) * kBwOne;
    if (config.mode == Mode::Parallel) {
        if (!gfb_admit(servers, config.m)) {
            throw ConfigError("parallel reclaiming with initialization requires GFB");
        }
        Bw u0 = full - static_cast<Bw>(config.m - 1) * max_u - sum_u;
        pools.global = std::clamp<Bw>(u0, 0, full);
        return pools;
    }
    // Sequential: the GFB-side value is exact in fixed point; the
    // BCL-side value comes from the analysis layer and is floored, which
    // only makes the pool smaller (safe side).
    const bool gfb = gfb_admit(servers, config.m);
    const BclResult bcl = bcl_admit(servers, config.m, config.bcl_condition_b);
    if (!gfb && !bcl.admitted) {
        throw ConfigError("sequential reclaiming with initialization requires GFB or BCL");
    }
    Bw ux_prime = 0;
    if (gfb) {
        Bw slack = full - static_cast<Bw>(config.m - 1) * max_u - sum_u;
        ux_prime = std::clamp<Bw>(slack / config.m, 0, kBwOne);
    }
    Bw ux_second = 0;
    if (bcl.admitted) {
        ReclaimInit ri = init_uinact_sequential(servers, config.m, config.epsilon_margin,
                                                config.bcl_condition_b);
        ux_second = std::clamp<Bw>(
            static_cast<Bw>(std::floor(ri.ux_dblprime * static_cast<double>(kBwOne))), 0, kBwOne);
    }
    pools.per_cpu.assign(static_cast<std::size_t>(config.m), std::max(ux_prime, ux_second));
    return pools;
}

void Engine::apply_initial_pools() {
    InitialPools pools = compute_initial_pools(config_, server_params_);
    init_global_ = pools.global;
    init_cpu_ = pools.per_cpu;
    reclaim_.global_uinact = init_global_;
    if (config_.mode == Mode::Sequential) {
        reclaim_.per_cpu_uinact = init_cpu_;
    }
}

int Engine::cpu_of(int server_idx) const {
    for (int cpu = 0; cpu < config_.m; ++cpu) {
        if (running_[static_cast<std::size_t>(cpu)] == server_idx) {
            return cpu;
        }
    }
    return -1;
}

TraceRecord Engine::make_row(Time t, TraceKind kind, int server_idx, int cpu) const {
    const Server& s = servers_[static_cast<std::size_t>(server_idx)];
    TraceRecord rec;
    rec.t = t;
    rec.kind = kind;
    rec.server = s.id();
    rec.cpu = cpu;
    rec.q_units = s.budget_units();
    rec.d = s.deadline();
    rec.state = s.phase();
    rec.uinact_global = reclaim_.global_uinact;
    rec.uinact_cpu = reclaim_.per_cpu_uinact;
    return rec;
}

void Engine::push_event(Time t, int cls, int server_idx, std::uint64_t epoch,
                        std::int64_t payload) {
    queue_.push(SimEvent{t, cls, server_idx, epoch, seq_++, payload});
}

void Engine::advance_to(Time t) {
    const Time dt = t - clock_;
    if (dt < 0) {
        throw EngineInvariantViolation("engine clock went backwards");
    }
    if (dt == 0) {
        return;
    }
    const std::int64_t full = static_cast<std::int64_t>(kBwOne) * config_.m;
    for (int cpu = 0; cpu < config_.m; ++cpu) {
        int idx = running_[static_cast<std::size_t>(cpu)];
        if (idx < 0) {
            continue;
        }
        Server& s = servers_[static_cast<std::size_t>(idx)];
        const std::int64_t rate = cpu_rate_[static_cast<std::size_t>(cpu)];
        s.consume(dt, rate);
        Job& job = s.head_job();
        if (job.exec_remaining < dt) {
            throw EngineInvariantViolation("job executed past its completion");
        }
        job.exec_remaining -= dt;
        counters_.busy += dt;
        counters_.rate_weighted += static_cast<Wide>(rate) * dt;
        counters_.reclaimed += static_cast<Wide>(full - rate) * dt;
    }
    clock_ = t;
}

void Engine::process_event(const SimEvent& ev) {
    Server& s = servers_[static_cast<std::size_t>(ev.server_idx)];
    switch (ev.cls) {
    case kClsArrival: {
        const Job& job = jobs_[static_cast<std::size_t>(ev.payload)];
        Transition tr = s.on_arrival(job, clock_, reclaim_);
        counters_.released += 1;
        TraceRecord rec = make_row(clock_, TraceKind::Arrival, ev.server_idx, -1);
        rec.job_index = job.index;
        rec.job_arrival = job.arrival;
        rec.job_deadline = job.abs_deadline;
        log_.record(std::move(rec));
        (void)tr;
        break;
    }
    case kClsCompletion: {
        if (ev.epoch != s.epoch()) {
            return; // superseded prediction
        }
        const int cpu = cpu_of(ev.server_idx);
        if (cpu < 0) {
            throw EngineInvariantViolation("completion for a server that is not running");
        }
        const Job done = s.head_job();
        // Snapshot the pools before a possible immediate rule-5 increment
        // so the completion row shows the pre-release state.
        const Bw pre_global = reclaim_.global_uinact;
        const std::vector<Bw> pre_cpu = reclaim_.per_cpu_uinact;
        Transition tr = s.on_job_completion(clock_, reclaim_);
        counters_.completed += 1;
        if (clock_ > done.abs_deadline) {
            counters_.misses += 1;
        }
        TraceRecord rec;
        rec.t = clock_;
        rec.kind = TraceKind::Completion;
        rec.server = s.id();
        rec.cpu = cpu;
        rec.q_units = s.budget_units();
        rec.d = s.deadline();
        rec.state = tr == Transition::InactiveImmediate ? ServerPhase::ActiveNonContending
                                                        : s.phase();
        rec.uinact_global = pre_global;
        rec.uinact_cpu = pre_cpu;
        rec.job_index = done.index;
        rec.job_arrival = done.arrival;
        rec.job_deadline = done.abs_deadline;
        log_.record(std::move(rec));
        if (tr == Transition::InactiveImmediate) {
            // The rule-5 boundary was already met at the completion
            // instant; record the zero-lag hand-off as its own row.
            log_.record(make_row(clock_, TraceKind::ZeroLag, ev.server_idx, cpu));
        } else if (tr == Transition::NonContending) {
            Time t_star = s.compute_zero_lag(clock_);
            push_event(t_star, kClsZeroLag, ev.server_idx, s.epoch());
        } else if (s.budget_units() == 0) {
            // Next job picked up with an empty budget: the exhaustion
            // belongs to this same instant, after all completions.
            push_event(clock_, kClsExhausted, ev.server_idx, s.epoch());
        }
        break;
    }
    case kClsExhausted: {
        if (ev.epoch != s.epoch()) {
            return;
        }
        const int cpu = cpu_of(ev.server_idx);
        if (cpu < 0) {
            throw EngineInvariantViolation("exhaustion for a server that is not running");
        }
        Time replenish_at = s.on_budget_exhausted(clock_);
        push_event(replenish_at, kClsReplenish, ev.server_idx, 0);
        log_.record(make_row(clock_, TraceKind::Exhausted, ev.server_idx, cpu));
        break;
    }
    case kClsReplenish: {
        s.on_replenishment(clock_);
        log_.record(make_row(clock_, TraceKind::Replenish, ev.server_idx, -1));
        break;
    }
    case kClsZeroLag: {
        Transition tr = s.on_zero_lag(clock_, ev.epoch, reclaim_);
        if (tr == Transition::WentInactive) {
            log_.record(make_row(clock_, TraceKind::ZeroLag, ev.server_idx, -1));
        }
        break;
    }
    default:
        throw EngineInvariantViolation("unknown event class");
    }
}

void Engine::dispatch(Time now) {
    const int n = static_cast<int>(servers_.size());
    std::vector<int> ready;
    ready.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (servers_[static_cast<std::size_t>(i)].phase() == ServerPhase::ActiveContending) {
            ready.push_back(i);
        }
    }
    std::sort(ready.begin(), ready.end(), [this](int a, int b) {
        const Server& sa = servers_[static_cast<std::size_t>(a)];
        const Server& sb = servers_[static_cast<std::size_t>(b)];
        if (sa.deadline() != sb.deadline()) {
            return sa.deadline() < sb.deadline();
        }
        return sa.id() < sb.id();
    });
    const std::size_t k = std::min(ready.size(), static_cast<std::size_t>(config_.m));
    std::vector<bool> in_top(static_cast<std::size_t>(n), false);
    for (std::size_t i = 0; i < k; ++i) {
        in_top[static_cast<std::size_t>(ready[i])] = true;
    }

    // Running servers that stay among the m earliest keep their processor;
    // everyone else is cleared (with a preempt row only if they are still
    // contenders — servers that completed, exhausted or went inactive
    // already logged their own transition).
    std::vector<bool> placed(static_cast<std::size_t>(n), false);
    for (int cpu = 0; cpu < config_.m; ++cpu) {
        int occ = running_[static_cast<std::size_t>(cpu)];
        if (occ < 0) {
            continue;
        }
        Server& s = servers_[static_cast<std::size_t>(occ)];
        if (s.phase() == ServerPhase::ActiveContending && in_top[static_cast<std::size_t>(occ)]) {
            placed[static_cast<std::size_t>(occ)] = true;
            continue;
        }
        if (s.phase() == ServerPhase::ActiveContending) {
            counters_.preemptions += 1;
            s.bump_epoch();
            log_.record(make_row(now, TraceKind::Preempt, occ, cpu));
        }
        running_[static_cast<std::size_t>(cpu)] = -1;
    }
    // Fill the holes in deadline order, lowest-numbered free cpu first.
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
        if (target < 0) {
            throw EngineInvariantViolation("no free processor for a top-priority server");
        }
        Server& s = servers_[static_cast<std::size_t>(idx)];
        const bool migrated = s.last_cpu() >= 0 && s.last_cpu() != target;
        if (migrated) {
            counters_.migrations += 1;
        }
        running_[static_cast<std::size_t>(target)] = idx;
        s.note_running_on(target);
        TraceRecord rec = make_row(now, TraceKind::Dispatch, idx, target);
        rec.migrated = migrated;
        rec.job_index = s.head_job().index;
        rec.job_arrival = s.head_job().arrival;
        rec.job_deadline = s.head_job().abs_deadline;
        log_.record(std::move(rec));
    }
}

void Engine::refresh_predictions(Time now) {
    for (int cpu = 0; cpu < config_.m; ++cpu) {
        int idx = running_[static_cast<std::size_t>(cpu)];
        Issued& slot = issued_[static_cast<std::size_t>(cpu)];
        if (idx < 0) {
            slot = Issued{};
            cpu_rate_[static_cast<std::size_t>(cpu)] = 0;
            continue;
        }
        Server& s = servers_[static_cast<std::size_t>(idx)];
        const std::int64_t rate = depletion_rate_fp(reclaim_, s.bandwidth_fp(), cpu, config_.m);
        cpu_rate_[static_cast<std::size_t>(cpu)] = rate;
        if (slot.server_idx == idx && slot.epoch == s.epoch() && slot.rate_fp == rate) {
            continue; // outstanding predictions still valid
        }
        s.bump_epoch();
        push_event(now + s.head_job().exec_remaining, kClsCompletion, idx, s.epoch());
        push_event(now + s.ticks_to_exhaustion(rate), kClsExhausted, idx, s.epoch());
        slot = Issued{idx, s.epoch(), rate};
    }
}

void Engine::check_invariants(Time now) const {
    int contending = 0;
    int occupied = 0;
    for (const auto& s : servers_) {
        s.check_local_invariants(now);
        if (s.phase() == ServerPhase::ActiveContending) {
            ++contending;
        }
    }
    for (int cpu = 0; cpu < config_.m; ++cpu) {
        if (running_[static_cast<std::size_t>(cpu)] >= 0) {
            ++occupied;
        }
    }
    if (occupied < std::min(contending, config_.m)) {
        throw EngineInvariantViolation("idle processor while contending servers wait");
    }
    if (reclaim_.global_uinact < 0) {
        throw EngineInvariantViolation("negative global inactive bandwidth");
    }
    for (Bw pool : reclaim_.per_cpu_uinact) {
        if (pool < 0) {
            throw EngineInvariantViolation("negative per-cpu inactive bandwidth");
        }
    }
}

RunResult Engine::run() {
    for (std::size_t i = 0; i < jobs_.size(); ++i) {
        const Job& j = jobs_[i];
        int idx = -1;
        for (std::size_t k = 0; k < server_params_.size(); ++k) {
            if (server_params_[k].id == j.task_id) {
                idx = static_cast<int>(k);
                break;
            }
        }
        push_event(j.arrival, kClsArrival, idx, 0, static_cast<std::int64_t>(i));
    }

    while (!queue_.empty() && queue_.top().t <= config_.horizon) {
        const Time t = queue_.top().t;
        advance_to(t);
        while (!queue_.empty() && queue_.top().t == t) {
            SimEvent ev = queue_.top();
            queue_.pop();
            process_event(ev);
        }
        dispatch(t);
        refresh_predictions(t);
        check_invariants(t);
    }
    advance_to(config_.horizon);

    RunResult result;
    result.init_uinact_global = init_global_;
    result.init_uinact_cpu = init_cpu_;
    result.counters = counters_;
    result.trace = log_.take();
    result.metrics = summarize(result.trace, tasks_, server_params_);
    return result;
}

RunResult run_simulation(const SystemConfig& config, std::vector<TaskSpec> tasks,
                         std::vector<ServerParams> servers, std::vector<Job> jobs) {
    Engine engine(config, std::move(tasks), std::move(servers), std::move(jobs));
    return engine.run();
}

} // namespace grubsim

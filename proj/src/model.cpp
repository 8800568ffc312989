#include "grubsim/model.hpp"

#include <algorithm>

namespace grubsim {

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::None: return "none";
    case Mode::Parallel: return "parallel";
    case Mode::Sequential: return "sequential";
    }
    return "none";
}

Mode mode_from_string(const std::string& s) {
    if (s == "none") return Mode::None;
    if (s == "parallel") return Mode::Parallel;
    if (s == "sequential") return Mode::Sequential;
    throw ConfigError("unknown reclaiming mode: " + s);
}

std::string to_string(ServerPhase phase) {
    switch (phase) {
    case ServerPhase::Inactive: return "Inactive";
    case ServerPhase::ActiveContending: return "ActiveContending";
    case ServerPhase::ActiveNonContending: return "ActiveNonContending";
    case ServerPhase::Recharging: return "Recharging";
    }
    return "Inactive";
}

ServerPhase phase_from_string(const std::string& s) {
    if (s == "Inactive") return ServerPhase::Inactive;
    if (s == "ActiveContending") return ServerPhase::ActiveContending;
    if (s == "ActiveNonContending") return ServerPhase::ActiveNonContending;
    if (s == "Recharging") return ServerPhase::Recharging;
    throw ConfigError("unknown server phase: " + s);
}

std::string to_string(AdmissionPolicy policy) {
    switch (policy) {
    case AdmissionPolicy::Gfb: return "gfb";
    case AdmissionPolicy::Bcl: return "bcl";
    case AdmissionPolicy::GfbOrBcl: return "gfb-or-bcl";
    case AdmissionPolicy::Off: return "off";
    }
    return "off";
}

AdmissionPolicy admission_policy_from_string(const std::string& s) {
    if (s == "gfb") return AdmissionPolicy::Gfb;
    if (s == "bcl") return AdmissionPolicy::Bcl;
    if (s == "gfb-or-bcl") return AdmissionPolicy::GfbOrBcl;
    if (s == "off") return AdmissionPolicy::Off;
    throw ConfigError("unknown admission policy: " + s);
}

void TaskSpec::validate() const {
    if (period <= 0) {
        throw ConfigError("task " + std::to_string(id) + ": period must be positive");
    }
    if (rel_deadline <= 0) {
        throw ConfigError("task " + std::to_string(id) + ": relative deadline must be positive");
    }
    if (exec.lo <= 0 || exec.lo > exec.hi) {
        throw ConfigError("task " + std::to_string(id) + ": execution model needs 0 < lo <= hi");
    }
    if (offset < 0) {
        throw ConfigError("task " + std::to_string(id) + ": negative arrival offset");
    }
    if (jitter_mean < 0) {
        throw ConfigError("task " + std::to_string(id) + ": negative jitter mean");
    }
}

void ServerParams::validate() const {
    if (period <= 0) {
        throw ConfigError("server " + std::to_string(id) + ": period must be positive");
    }
    if (max_budget <= 0 || max_budget > period) {
        throw ConfigError("server " + std::to_string(id) +
                          ": budget must satisfy 0 < Q <= P (bandwidth in (0, 1])");
    }
}

void SystemConfig::validate() const {
    if (m < 1) {
        throw ConfigError("processor count must be >= 1");
    }
    if (horizon <= 0) {
        throw ConfigError("horizon must be positive");
    }
    if (!(epsilon_margin > 0.0 && epsilon_margin < 1.0)) {
        throw ConfigError("epsilon_margin must lie in (0, 1)");
    }
}

Server::Server(ServerParams params, int m)
    : params_(params),
      m_(m),
      u_fp_(params.bandwidth_fp()),
      max_budget_units_(static_cast<Wide>(params.max_budget) * kBwOne * m) {
    params_.validate();
}

double Server::budget_ticks() const {
    return static_cast<double>(budget_) /
           (static_cast<double>(kBwOne) * static_cast<double>(m_));
}

Transition Server::on_arrival(Job job, Time now, ReclaimState& reclaim) {
    if (job.arrival != now) {
        throw EngineInvariantViolation("arrival event fired at the wrong instant");
    }
    switch (phase_) {
    case ServerPhase::Inactive: {
        // Rule 1: fresh scheduling deadline and a full budget. The
        // bandwidth parked by the last rule-5 transition (if any) is
        // taken back from the pool it was stored in.
        jobs_.push_back(std::move(job));
        budget_ = max_budget_units_;
        deadline_ = now + params_.period;
        phase_ = ServerPhase::ActiveContending;
        if (stored_) {
            reclaim.recover(u_fp_, stored_cpu_.value_or(0));
            stored_ = false;
            stored_cpu_.reset();
        }
        bump_epoch();
        return Transition::Activated;
    }
    case ServerPhase::ActiveNonContending:
        // Rule 4: re-enter contention without touching (q, d).
        jobs_.push_back(std::move(job));
        phase_ = ServerPhase::ActiveContending;
        bump_epoch(); // cancels the pending zero-lag timer
        return Transition::Rearmed;
    case ServerPhase::ActiveContending:
    case ServerPhase::Recharging:
        jobs_.push_back(std::move(job));
        return Transition::Queued;
    }
    throw EngineInvariantViolation("unreachable arrival state");
}

Transition Server::on_job_completion(Time now, ReclaimState& reclaim) {
    if (phase_ != ServerPhase::ActiveContending || jobs_.empty()) {
        throw EngineInvariantViolation("completion on a non-contending server");
    }
    if (jobs_.front().exec_remaining != 0) {
        throw EngineInvariantViolation("completion with execution time left");
    }
    jobs_.pop_front();
    bump_epoch();
    if (!jobs_.empty()) {
        return Transition::NextJob; // rule 2a
    }
    // Rule 2b, with the rule-5 boundary evaluated at the same instant:
    // when q >= (d - t) U already holds there is no lag left to wait out.
    Wide boundary = static_cast<Wide>(deadline_ - now) * u_fp_ * m_;
    if (budget_ >= boundary) {
        go_inactive(now, reclaim);
        return Transition::InactiveImmediate;
    }
    phase_ = ServerPhase::ActiveNonContending;
    return Transition::NonContending;
}

Time Server::on_budget_exhausted(Time now) {
    if (phase_ != ServerPhase::ActiveContending || jobs_.empty()) {
        throw EngineInvariantViolation("budget exhaustion on a non-contending server");
    }
    if (budget_ != 0) {
        throw EngineInvariantViolation("budget exhaustion with budget left");
    }
    phase_ = ServerPhase::Recharging;
    bump_epoch();
    // Rule 3 fires at the current deadline; under heavy contention the
    // budget can outlive the deadline, in which case the recharge is due
    // immediately and the deadline catches up one period at a time.
    return std::max(now, deadline_);
}

void Server::on_replenishment(Time /*now*/) {
    if (phase_ != ServerPhase::Recharging) {
        throw EngineInvariantViolation("replenishment outside Recharging");
    }
    deadline_ += params_.period;
    budget_ = max_budget_units_;
    phase_ = ServerPhase::ActiveContending;
    bump_epoch();
}

Time Server::compute_zero_lag(Time now) const {
    if (phase_ != ServerPhase::ActiveNonContending) {
        throw EngineInvariantViolation("zero-lag query outside ActiveNonContending");
    }
    // Earliest integer t with q >= (d - t) U, i.e. t >= d - q / U.
    Wide lag_ticks = budget_ / (static_cast<Wide>(u_fp_) * m_);
    Time t = deadline_ - static_cast<Time>(lag_ticks);
    return std::max(t, now);
}

Transition Server::on_zero_lag(Time now, std::uint64_t timer_epoch, ReclaimState& reclaim) {
    if (phase_ != ServerPhase::ActiveNonContending || timer_epoch != epoch_) {
        return Transition::StaleTimer;
    }
    Wide boundary = static_cast<Wide>(deadline_ - now) * u_fp_ * m_;
    if (budget_ < boundary) {
        throw EngineInvariantViolation("zero-lag timer fired before the boundary");
    }
    go_inactive(now, reclaim);
    return Transition::WentInactive;
}

void Server::go_inactive(Time /*now*/, ReclaimState& reclaim) {
    if (last_cpu_ < 0) {
        throw EngineInvariantViolation("server went inactive without ever executing");
    }
    phase_ = ServerPhase::Inactive;
    stored_ = true;
    stored_cpu_ = last_cpu_;
    reclaim.store(u_fp_, last_cpu_);
    bump_epoch();
}

void Server::consume(Time dt, std::int64_t rate_fp) {
    if (dt == 0) {
        return;
    }
    Wide used = static_cast<Wide>(rate_fp) * dt;
    if (used > budget_) {
        // The true exhaustion instant lies strictly inside the final tick;
        // the event is pinned to the tick boundary and the sub-tick
        // remainder forgiven. Anything larger is a misprediction.
        if (used - budget_ >= rate_fp) {
            throw EngineInvariantViolation("budget crossed zero inside an advance interval");
        }
        budget_ = 0;
        return;
    }
    budget_ -= used;
}

Time Server::ticks_to_exhaustion(std::int64_t rate_fp) const {
    return static_cast<Time>(ceil_div(budget_, rate_fp));
}

void Server::check_local_invariants(Time now) const {
    if (budget_ < 0 || budget_ > max_budget_units_) {
        throw EngineInvariantViolation("budget outside [0, Q]");
    }
    if (phase_ == ServerPhase::ActiveContending && jobs_.empty()) {
        throw EngineInvariantViolation("contending server with no pending job");
    }
    if (phase_ == ServerPhase::Inactive && !jobs_.empty()) {
        throw EngineInvariantViolation("inactive server with pending jobs");
    }
    if (phase_ == ServerPhase::ActiveNonContending) {
        Wide boundary = static_cast<Wide>(deadline_ - now) * u_fp_ * m_;
        if (budget_ >= boundary) {
            throw EngineInvariantViolation("past the rule-5 boundary while ActiveNonContending");
        }
    }
}

} // namespace grubsim

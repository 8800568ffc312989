#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "grubsim/reclaim.hpp"
#include "grubsim/ticks.hpp"

namespace grubsim {

enum class TaskKind { Periodic, Sporadic };

/// Per-job execution-time model. Fixed is represented as lo == hi.
struct ExecModel {
    enum class Kind { Fixed, Uniform };
    Kind kind = Kind::Fixed;
    Time lo = 0;
    Time hi = 0;

    static ExecModel fixed(Time c) { return {Kind::Fixed, c, c}; }
    static ExecModel uniform(Time lo, Time hi) { return {Kind::Uniform, lo, hi}; }
};

struct TaskSpec {
    int id = 0;
    TaskKind kind = TaskKind::Periodic;
    Time period = 0;       // T_i (minimum inter-arrival for sporadic)
    Time rel_deadline = 0; // D_i, defaults to T_i
    ExecModel exec;
    Time offset = 0;
    Time jitter_mean = 0; // sporadic only: mean of the exponential gap on top of T_i

    void validate() const;
};

struct Job {
    int task_id = 0;
    std::int64_t index = 0;
    Time arrival = 0;
    Time exec_total = 0;
    Time exec_remaining = 0;
    Time abs_deadline = 0;
};

/// Static reservation: budget Q per period P, bandwidth U = Q/P. The
/// budget and period are authoritative; the fixed-point bandwidth is
/// derived once and used consistently by every dynamic computation.
struct ServerParams {
    int id = 0;
    Time period = 0;     // P_i
    Time max_budget = 0; // Q_i

    Bw bandwidth_fp() const { return bw_from_qp(max_budget, period); }
    double utilization() const {
        return static_cast<double>(max_budget) / static_cast<double>(period);
    }
    void validate() const;
};

enum class ServerPhase { Inactive, ActiveContending, ActiveNonContending, Recharging };

std::string to_string(ServerPhase phase);
ServerPhase phase_from_string(const std::string& s);

enum class AdmissionPolicy { Gfb, Bcl, GfbOrBcl, Off };

std::string to_string(AdmissionPolicy policy);
AdmissionPolicy admission_policy_from_string(const std::string& s);

struct SystemConfig {
    int m = 1;
    Mode mode = Mode::None;
    bool init_reclaim = false;
    AdmissionPolicy admission = AdmissionPolicy::GfbOrBcl;
    bool bcl_condition_b = true; // the equality clause of the BCL test
    Time horizon = 0;
    std::uint64_t seed = 0;
    double epsilon_margin = 1e-6; // strictness margin for the BCL-side pool bound

    void validate() const;
};

/// Outcome tags for the transition operations, named after the rule that
/// fired. Composite outcomes (completion that lands directly in Inactive)
/// are reported as the pair of rules taken.
enum class Transition {
    Activated,          // rule 1: Inactive -> ActiveContending
    Queued,             // arrival while contending or recharging: job queued only
    Rearmed,            // rule 4: ActiveNonContending -> ActiveContending
    NextJob,            // rule 2a: stays ActiveContending
    NonContending,      // rule 2b: -> ActiveNonContending, zero-lag timer due
    InactiveImmediate,  // rule 2b + rule 5 at the same instant
    Throttled,          // rule 2c: -> Recharging
    Replenished,        // rule 3
    WentInactive,       // rule 5 via the zero-lag timer
    StaleTimer,         // zero-lag timer that no longer applies
};

/// CBS/GRUB server state machine. One instance per reservation; the
/// engine owns the clock and calls the transition operations, the
/// reclaiming state records bandwidth hand-offs.
///
/// Budgets are held in units of tick / (kBwOne * m): replenishing to Q_i
/// ticks stores Q_i * kBwOne * m units, and executing for dt ticks at a
/// fixed-point rate r consumes exactly r * dt units.
class Server {
public:
    Server(ServerParams params, int m);

    const ServerParams& params() const { return params_; }
    int id() const { return params_.id; }
    Bw bandwidth_fp() const { return u_fp_; }

    ServerPhase phase() const { return phase_; }
    Wide budget_units() const { return budget_; }
    Time deadline() const { return deadline_; }
    std::optional<int> stored_cpu() const { return stored_cpu_; }
    int last_cpu() const { return last_cpu_; }
    bool has_pending_jobs() const { return !jobs_.empty(); }
    std::size_t pending_count() const { return jobs_.size(); }
    Job& head_job() { return jobs_.front(); }
    const Job& head_job() const { return jobs_.front(); }

    Wide max_budget_units() const { return max_budget_units_; }
    double budget_ticks() const; // double view for reports

    /// Epoch stamps outstanding predictions (exhaustion, completion,
    /// zero-lag). Any transition or rate change bumps it, so events
    /// issued against an older epoch are stale.
    std::uint64_t epoch() const { return epoch_; }
    void bump_epoch() { ++epoch_; }

    void note_running_on(int cpu) { last_cpu_ = cpu; }

    // --- transition operations -------------------------------------------

    /// Rule 1 / rule 4 / plain queueing, depending on the current phase.
    Transition on_arrival(Job job, Time now, ReclaimState& reclaim);

    /// Rules 2a/2b; also applies the rule-5 boundary check at the same
    /// instant, which can send the server straight to Inactive.
    Transition on_job_completion(Time now, ReclaimState& reclaim);

    /// Rule 2c. Returns the replenishment instant (the current deadline,
    /// or `now` when the deadline already passed under heavy contention).
    Time on_budget_exhausted(Time now);

    /// Rule 3.
    void on_replenishment(Time now);

    /// Earliest t >= now with q >= (d - t) * U, as an integer tick.
    Time compute_zero_lag(Time now) const;

    /// Rule 5 fired by the zero-lag timer.
    Transition on_zero_lag(Time now, std::uint64_t timer_epoch, ReclaimState& reclaim);

    // --- engine hooks ------------------------------------------------------

    /// Settle `dt` ticks of execution at fixed-point rate `rate_fp`.
    /// Consumption is exact; the final sub-tick of a budget that runs out
    /// strictly inside a tick is forgiven (the exhaustion event is pinned
    /// to the next integer tick and the remainder clamped).
    void consume(Time dt, std::int64_t rate_fp);

    /// Wall ticks until the budget empties at `rate_fp`, rounded up.
    Time ticks_to_exhaustion(std::int64_t rate_fp) const;

    void check_local_invariants(Time now) const;

private:
    void go_inactive(Time now, ReclaimState& reclaim);

    ServerParams params_;
    int m_ = 1;
    Bw u_fp_ = 0;
    Wide max_budget_units_ = 0;

    ServerPhase phase_ = ServerPhase::Inactive;
    Wide budget_ = 0;
    Time deadline_ = 0;
    std::optional<int> stored_cpu_; // where the bandwidth is parked (sequential memo)
    bool stored_ = false;           // bandwidth currently counted in U_inact
    int last_cpu_ = -1;
    std::deque<Job> jobs_;
    std::uint64_t epoch_ = 0;
};

} // namespace grubsim

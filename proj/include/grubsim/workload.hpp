#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "grubsim/admission.hpp"
#include "grubsim/model.hpp"

namespace grubsim {

/// Deterministic random helpers on top of mt19937_64. Distribution
/// transforms are written out so draws do not depend on the standard
/// library's unspecified algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [lo, hi] via rejection-free scaling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double log_uniform(double lo, double hi);

    double exponential(double mean);

    /// Derive an independent stream; used to give each task its own
    /// substream so draws do not shift when other tasks change.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

private:
    std::mt19937_64 gen_;
};

struct GenSpec {
    int n_tasks = 0;
    double total_util = 0.0;
    Time period_min = 10'000'000;  // 10 ms in ticks
    Time period_max = 100'000'000; // 100 ms
    double alpha = 1.0;            // BCET / WCET
    double gamma = 1.0;            // WCET / budget
    std::uint64_t seed = 0;

    void validate() const;
};

struct TaskSet {
    std::vector<TaskSpec> tasks;
    std::vector<ServerParams> servers;
};

/// Fixed-sum utilization sampling: uniform over the simplex slice
/// {sum U_i = total, 0 < U_i < 1}, by unordered-spacings sampling with
/// rejection of out-of-range coordinates.
std::vector<double> gen_utilizations(int n, double total, Rng& rng);

/// Random task set following the synthetic-experiment protocol: periods
/// log-uniform, budgets Q_i = C_i = U_i T_i, servers (Q_i, P_i), per-job
/// execution uniform in [alpha*gamma*C_i, gamma*C_i].
TaskSet gen_taskset(const GenSpec& spec);

/// Arrival instants for one sporadic task up to the horizon: gaps are
/// T_i plus an exponential jitter of the task's configured mean, so
/// consecutive arrivals always respect the minimum separation.
std::vector<Time> gen_sporadic_stream(const TaskSpec& task, Time horizon, Rng& rng);

/// Materialized job stream for a run: arrivals and per-job execution
/// draws for every task, ordered by (arrival, task id). Each task uses a
/// substream derived from (seed, task id).
std::vector<Job> build_jobs(std::span<const TaskSpec> tasks, Time horizon, std::uint64_t seed);

enum class AdmissionBucket { GfbOnly, BclOnly, Both, Neither };

AdmissionBucket classify_admission(std::span<const ServerParams> servers, int m);

struct BucketSearchResult {
    bool found = false;
    TaskSet set;
    std::uint64_t seed = 0;
};

/// Search random sets (n drawn in [n_min, n_max]) for one landing in the
/// requested admission bucket; used to exhibit the non-dominance of the
/// two tests.
BucketSearchResult find_admission_bucket(AdmissionBucket want, double total_util, int m,
                                         int n_min, int n_max, std::uint64_t seed,
                                         int max_samples);

} // namespace grubsim

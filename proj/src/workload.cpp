#include "grubsim/workload.hpp"

#include <algorithm>
#include <cmath>

namespace grubsim {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo >= hi) {
        return lo;
    }
    const double span = static_cast<double>(hi - lo + 1);
    auto offset = static_cast<std::int64_t>(uniform01() * span);
    return std::min(lo + offset, hi);
}

double Rng::log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
}

double Rng::exponential(double mean) {
    return -mean * std::log1p(-uniform01());
}

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void GenSpec::validate() const {
    if (n_tasks < 1) {
        throw ConfigError("generator: need at least one task");
    }
    if (!(total_util > 0.0) || total_util >= static_cast<double>(n_tasks)) {
        throw ConfigError("generator: total utilization must lie in (0, n)");
    }
    if (period_min < 1 || period_max < period_min) {
        throw ConfigError("generator: bad period range");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("generator: alpha must lie in (0, 1]");
    }
    if (!(gamma > 0.0)) {
        throw ConfigError("generator: gamma must be positive");
    }
}

std::vector<double> gen_utilizations(int n, double total, Rng& rng) {
    if (n < 1 || !(total > 0.0) || total >= static_cast<double>(n)) {
        throw ConfigError("utilization sampling: need 0 < total < n");
    }
    if (n == 1) {
        return {total};
    }
    // Unordered-spacings sampling is uniform over the fixed-sum simplex;
    // coordinates outside (0, 1) are rejected and the draw repeated.
    std::vector<double> cuts(static_cast<std::size_t>(n) - 1);
    for (int attempt = 0; attempt < 1'000'000; ++attempt) {
        for (auto& c : cuts) {
            c = rng.uniform(0.0, total);
        }
        std::sort(cuts.begin(), cuts.end());
        std::vector<double> u(static_cast<std::size_t>(n));
        bool ok = true;
        double prev = 0.0;
        for (int i = 0; i < n; ++i) {
            double next = i + 1 < n ? cuts[static_cast<std::size_t>(i)] : total;
            u[static_cast<std::size_t>(i)] = next - prev;
            prev = next;
            if (!(u[static_cast<std::size_t>(i)] > 0.0 && u[static_cast<std::size_t>(i)] < 1.0)) {
                ok = false;
            }
        }
        if (ok) {
            return u;
        }
    }
    throw ConfigError("utilization sampling: rejection did not converge; total too close to n");
}

TaskSet gen_taskset(const GenSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<double> utils = gen_utilizations(spec.n_tasks, spec.total_util, rng);
    TaskSet out;
    out.tasks.reserve(utils.size());
    out.servers.reserve(utils.size());
    for (int i = 0; i < spec.n_tasks; ++i) {
        const double u = utils[static_cast<std::size_t>(i)];
        const Time period = static_cast<Time>(std::llround(
            rng.log_uniform(static_cast<double>(spec.period_min),
                            static_cast<double>(spec.period_max))));
        Time budget = static_cast<Time>(std::llround(u * static_cast<double>(period)));
        budget = std::clamp<Time>(budget, 1, period);

        Time wcet = static_cast<Time>(std::llround(spec.gamma * static_cast<double>(budget)));
        Time bcet = static_cast<Time>(
            std::llround(spec.alpha * spec.gamma * static_cast<double>(budget)));
        wcet = std::max<Time>(wcet, 1);
        bcet = std::clamp<Time>(bcet, 1, wcet);

        TaskSpec task;
        task.id = i;
        task.kind = TaskKind::Periodic;
        task.period = period;
        task.rel_deadline = period;
        task.exec = bcet == wcet ? ExecModel::fixed(wcet) : ExecModel::uniform(bcet, wcet);
        task.offset = 0;
        out.tasks.push_back(task);
        out.servers.push_back(ServerParams{i, period, budget});
    }
    return out;
}

std::vector<Time> gen_sporadic_stream(const TaskSpec& task, Time horizon, Rng& rng) {
    if (task.kind != TaskKind::Sporadic) {
        throw ConfigError("sporadic stream requested for a periodic task");
    }
    std::vector<Time> arrivals;
    Time t = task.offset;
    while (t <= horizon) {
        arrivals.push_back(t);
        Time jitter = 0;
        if (task.jitter_mean > 0) {
            jitter = static_cast<Time>(
                std::llround(rng.exponential(static_cast<double>(task.jitter_mean))));
        }
        t += task.period + std::max<Time>(jitter, 0);
    }
    return arrivals;
}

std::vector<Job> build_jobs(std::span<const TaskSpec> tasks, Time horizon, std::uint64_t seed) {
    std::vector<Job> jobs;
    for (const auto& task : tasks) {
        task.validate();
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(task.id)));
        std::vector<Time> arrivals;
        if (task.kind == TaskKind::Periodic) {
            for (Time t = task.offset; t <= horizon; t += task.period) {
                arrivals.push_back(t);
            }
        } else {
            arrivals = gen_sporadic_stream(task, horizon, rng);
        }
        std::int64_t k = 0;
        for (Time a : arrivals) {
            Time exec = task.exec.lo;
            if (task.exec.kind == ExecModel::Kind::Uniform) {
                exec = rng.uniform_int(task.exec.lo, task.exec.hi);
            }
            Job job;
            job.task_id = task.id;
            job.index = k++;
            job.arrival = a;
            job.exec_total = exec;
            job.exec_remaining = exec;
            job.abs_deadline = a + task.rel_deadline;
            jobs.push_back(job);
        }
    }
    std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        if (a.arrival != b.arrival) return a.arrival < b.arrival;
        if (a.task_id != b.task_id) return a.task_id < b.task_id;
        return a.index < b.index;
    });
    return jobs;
}

AdmissionBucket classify_admission(std::span<const ServerParams> servers, int m) {
    const bool gfb = gfb_admit(servers, m);
    const bool bcl = bcl_admit(servers, m).admitted;
    if (gfb && bcl) return AdmissionBucket::Both;
    if (gfb) return AdmissionBucket::GfbOnly;
    if (bcl) return AdmissionBucket::BclOnly;
    return AdmissionBucket::Neither;
}

BucketSearchResult find_admission_bucket(AdmissionBucket want, double total_util, int m,
                                         int n_min, int n_max, std::uint64_t seed,
                                         int max_samples) {
    Rng picker(seed);
    for (int i = 0; i < max_samples; ++i) {
        GenSpec spec;
        spec.n_tasks = static_cast<int>(picker.uniform_int(n_min, n_max));
        if (total_util >= spec.n_tasks) {
            continue; // infeasible draw for this n
        }
        spec.total_util = total_util;
        spec.seed = Rng::mix(seed, static_cast<std::uint64_t>(i) + 1);
        TaskSet set = gen_taskset(spec);
        if (classify_admission(set.servers, m) == want) {
            return {true, std::move(set), spec.seed};
        }
    }
    return {};
}

} // namespace grubsim

#include "grubsim/admission.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace grubsim {

namespace {

double total_utilization(std::span<const ServerParams> servers) {
    double u = 0.0;
    for (const auto& s : servers) {
        u += s.utilization();
    }
    return u;
}

double max_utilization(std::span<const ServerParams> servers) {
    double umax = 0.0; // empty set: U_max taken as 0
    for (const auto& s : servers) {
        umax = std::max(umax, s.utilization());
    }
    return umax;
}

} // namespace

bool gfb_admit(std::span<const ServerParams> servers, int m) {
    if (m < 1) {
        throw ConfigError("gfb_admit: m must be >= 1");
    }
    if (servers.empty()) {
        return true;
    }
    for (const auto& s : servers) {
        s.validate();
    }
    double u = total_utilization(servers);
    double umax = max_utilization(servers);
    return u <= m - (m - 1) * umax + kTol;
}

double bcl_workload_bound(const ServerParams& interferer, const ServerParams& target) {
    const Time pk = target.period;
    const Time pi = interferer.period;
    const Time qi = interferer.max_budget;
    const Time delta = pk % pi;
    const double whole_jobs = static_cast<double>(pk / pi) * static_cast<double>(qi);
    const double carry_in = static_cast<double>(std::min(qi, delta));
    const double aperiodic = static_cast<double>(std::max<Time>(delta - qi, 0)) *
                             interferer.utilization();
    return whole_jobs + carry_in + aperiodic;
}

BclResult bcl_admit(std::span<const ServerParams> servers, int m, bool condition_b) {
    if (m < 1) {
        throw ConfigError("bcl_admit: m must be >= 1");
    }
    BclResult result;
    result.admitted = true;
    result.per_server_margin.reserve(servers.size());
    for (const auto& target : servers) {
        target.validate();
        const double slack = static_cast<double>(target.period - target.max_budget);
        double interference = 0.0;
        bool exists_small_workload = false;
        for (const auto& other : servers) {
            if (other.id == target.id) {
                continue;
            }
            double w = bcl_workload_bound(other, target);
            interference += std::min(w, slack);
            if (w <= slack + kTol) {
                exists_small_workload = true;
            }
        }
        const double bound = m * slack;
        result.per_server_margin.push_back(bound - interference);
        bool ok;
        if (interference < bound - kTol) {
            ok = true; // condition (a)
        } else if (condition_b && std::abs(interference - bound) <= kTol) {
            ok = !exists_small_workload; // condition (b), as published
        } else {
            ok = false;
        }
        result.admitted = result.admitted && ok;
    }
    return result;
}

AdmissionVerdict evaluate_admission(std::span<const ServerParams> servers, int m,
                                    AdmissionPolicy policy, bool condition_b) {
    AdmissionVerdict v;
    v.passed_gfb = gfb_admit(servers, m);
    BclResult bcl = bcl_admit(servers, m, condition_b);
    v.passed_bcl = bcl.admitted;
    v.per_server_bcl_margin = std::move(bcl.per_server_margin);
    switch (policy) {
    case AdmissionPolicy::Gfb: v.admitted = v.passed_gfb; break;
    case AdmissionPolicy::Bcl: v.admitted = v.passed_bcl; break;
    case AdmissionPolicy::GfbOrBcl: v.admitted = v.passed_gfb || v.passed_bcl; break;
    case AdmissionPolicy::Off: v.admitted = true; break;
    }
    return v;
}

double init_uinact_parallel(std::span<const ServerParams> servers, int m) {
    if (!gfb_admit(servers, m)) {
        throw ConfigError("parallel reclaiming initialization requires a GFB-admitted set");
    }
    double value = m - (m - 1) * max_utilization(servers) - total_utilization(servers);
    return std::clamp(value, 0.0, static_cast<double>(m));
}

ReclaimInit init_uinact_sequential(std::span<const ServerParams> servers, int m,
                                   double epsilon_margin, bool condition_b) {
    if (!(epsilon_margin > 0.0 && epsilon_margin < 1.0)) {
        throw ConfigError("epsilon_margin must lie in (0, 1)");
    }
    const bool gfb = gfb_admit(servers, m);
    const BclResult bcl = bcl_admit(servers, m, condition_b);
    if (!gfb && !bcl.admitted) {
        throw ConfigError("sequential reclaiming initialization requires GFB or BCL to pass");
    }
    ReclaimInit init;
    if (gfb) {
        double ux = (m - (m - 1) * max_utilization(servers) - total_utilization(servers)) / m;
        init.ux_prime = std::clamp(ux, 0.0, 1.0);
    }
    if (bcl.admitted) {
        double min_headroom = std::numeric_limits<double>::infinity();
        for (const auto& target : servers) {
            const double pk = static_cast<double>(target.period);
            const double slack = static_cast<double>(target.period - target.max_budget);
            double interference = 0.0;
            for (const auto& other : servers) {
                if (other.id == target.id) {
                    continue;
                }
                interference += std::min(bcl_workload_bound(other, target), slack);
            }
            min_headroom = std::min(min_headroom, slack / pk - interference / (m * pk));
        }
        // The bound is strict; back it off by the configured margin.
        double ux = std::isinf(min_headroom) ? 1.0 : (1.0 - epsilon_margin) * min_headroom;
        init.ux_dblprime = std::clamp(ux, 0.0, 1.0);
    }
    init.sequential_uinact0 = std::max(init.ux_prime, init.ux_dblprime);
    init.parallel_uinact0 =
        gfb ? std::clamp(m - (m - 1) * max_utilization(servers) - total_utilization(servers),
                         0.0, static_cast<double>(m))
            : 0.0;
    return init;
}

} // namespace grubsim

#pragma once

#include <span>
#include <vector>

#include "grubsim/model.hpp"

namespace grubsim {

struct AdmissionVerdict {
    bool admitted = false;
    bool passed_gfb = false;
    bool passed_bcl = false;
    /// Per target k: m (P_k - Q_k) - sum_{i != k} min{W_hat_{i,k}, P_k - Q_k}.
    std::vector<double> per_server_bcl_margin;
};

/// Initial reclaimable-bandwidth values for both modes. The sequential
/// value is the larger of the GFB-derived and BCL-derived bounds, since
/// either test alone is enough to admit the set.
struct ReclaimInit {
    double parallel_uinact0 = 0.0;
    double sequential_uinact0 = 0.0; // same value U_x on every processor
    double ux_prime = 0.0;
    double ux_dblprime = 0.0;
};

/// GFB utilization test: sum U_i <= m - (m - 1) max U_i. For m = 1 this
/// degenerates to the plain EDF bound sum U_i <= 1. Empty sets are
/// vacuously admitted.
bool gfb_admit(std::span<const ServerParams> servers, int m);

/// Worst-case workload of `interferer` inside a problem window of length
/// P_k, including the bandwidth an aperiodically re-activated server can
/// inject via reclaiming:
///   floor(P_k / P_i) Q_i + min{Q_i, D} + max{D - Q_i, 0} U_i,
/// where D = P_k mod P_i.
double bcl_workload_bound(const ServerParams& interferer, const ServerParams& target);

struct BclResult {
    bool admitted = false;
    std::vector<double> per_server_margin;
};

/// Interference test: every target k must satisfy
///   (a) sum_{i != k} min{W_hat_{i,k}, P_k - Q_k} < m (P_k - Q_k), or
///   (b) equality together with: no h != k has W_hat_{h,k} <= P_k - Q_k.
/// `condition_b` disables clause (b); clause (a) alone is sufficient.
BclResult bcl_admit(std::span<const ServerParams> servers, int m, bool condition_b = true);

AdmissionVerdict evaluate_admission(std::span<const ServerParams> servers, int m,
                                    AdmissionPolicy policy, bool condition_b = true);

/// Largest initial value of the global inactive-bandwidth pool that keeps
/// the set GFB-schedulable: m - (m - 1) U_max - U, clamped to [0, m].
/// Parallel reclaiming is only covered by the GFB test, so calling this
/// for a set that fails GFB is an error.
double init_uinact_parallel(std::span<const ServerParams> servers, int m);

/// Per-processor initial pool for sequential reclaiming:
///   U_x'  = (m - (m - 1) U_max - U) / m            if GFB passes,
///   U_x'' = (1 - eps) min_k { (P_k - Q_k) / P_k
///            - sum_{i != k} min{W_hat_{i,k}, P_k - Q_k} / (m P_k) }
///                                                   if BCL passes,
/// result max{U_x', U_x''} clamped to [0, 1]. The published bound on
/// U_x'' is open, so it is backed off by the configurable margin `eps`.
ReclaimInit init_uinact_sequential(std::span<const ServerParams> servers, int m,
                                   double epsilon_margin = 1e-6, bool condition_b = true);

} // namespace grubsim

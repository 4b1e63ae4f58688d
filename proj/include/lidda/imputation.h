// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction of external-channel member impressions from daily aggregates.
// Per day d: click events j get m_j >= 1 impressions, no-click paths k soak up
// the leftover. Two routes, cross-checked: the three-step stochastic
// allocation (Geometric draws per click, Poisson + exact largest-remainder
// rescale for the leftover) and the joint convex program
//   max sum_j w_j log x_j + sum_k u_k log y_k
//   s.t. sum x + sum y = I_d, x_j >= 1, y_k >= 0
// solved in closed form via its KKT multiplier (x_j = max(1, w_j/lambda),
// y_k = u_k/lambda) plus a bisection oracle on the budget equation.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lidda/common.h"
#include "lidda/journey.h"

namespace lidda {

struct ClickRef {
    int64_t path_id = 0;
    int touch_idx = 0;
    std::string channel;
};

struct AllocationProblem {
    int64_t day = 0;
    std::vector<double> click_weights;  // w_j = r_{c(j),d} > 0
    std::vector<ClickRef> clicks;       // aligned with click_weights
    std::vector<double> path_weights;   // u_k >= 0
    std::vector<int64_t> path_ids;      // aligned with path_weights
    double budget = 0.0;                // I_d

    void validate() const;
};

struct AllocationResult {
    std::vector<double> x;  // per click, >= 1
    std::vector<double> y;  // per no-click path, >= 0
    double lambda = 0.0;
    int clamped = 0;  // m*: clicks pinned at x_j = 1
};

struct StochasticAllocation {
    std::vector<int64_t> click_imps;  // m_j
    std::vector<int64_t> path_imps;   // I_k, sums to round(leftover) exactly
    double leftover = 0.0;            // L_d (clamped at 0)
    bool overdraw = false;            // sum m_j exceeded the budget
    double unallocated = 0.0;         // leftover with no paths to take it
    std::string warning;
};

// --- Algorithm 1 pieces ---------------------------------------------------

struct MemberBudget {
    std::map<std::pair<std::string, int64_t>, double> per_channel_day;  // I_mem
    std::map<int64_t, double> per_day;                                  // I_d
};

// I_mem_{c,d} = I_ext_{c,d} * member_clicks_{c,d} / C_ext_{c,d}
MemberBudget member_budget(
    const ChannelAggregates& agg,
    const std::map<std::pair<std::string, int64_t>, int64_t>& member_clicks);

// r_{c,d} = alpha * I_ext/C_ext with alpha = (I_cl/C_cl)/(I_tot/C_tot),
// clamped below at 1 (Geometric support needs mean >= 1).
double clicker_rate(const ChannelAggregates& agg, const std::string& channel, int64_t day);

StochasticAllocation allocate_stochastic(const AllocationProblem& problem, Rng& rng);

// --- joint convex solver ----------------------------------------------------

AllocationResult solve_joint(const AllocationProblem& problem);
double solve_lambda_bisection(const AllocationProblem& problem);

double allocation_objective(const AllocationProblem& problem, const std::vector<double>& x,
                            const std::vector<double>& y);

// Exact integer split of total across weights via largest-remainder rounding.
std::vector<int64_t> largest_remainder_round(const std::vector<double>& targets,
                                             int64_t total);

// --- materialization ----------------------------------------------------

struct AuditRow {
    int64_t day = 0;
    std::string channel;
    std::string event_type;  // "click" | "path"
    std::string event_id;
    int64_t amount = 0;
};

struct DayAllocation {
    AllocationProblem problem;
    std::vector<int64_t> click_imps;
    std::vector<int64_t> path_imps;
    std::map<std::string, double> channel_budget_share;  // for channel draws
};

struct ImputeOutcome {
    std::vector<Path> paths;
    std::vector<AuditRow> audit;
    std::vector<std::string> warnings;
};

// Inserts m_j - 1 impressions behind each click (within the pre-click window)
// and I_k impressions within day d for no-click paths; imputed=true, paths
// re-sorted.
void materialize(std::vector<Path>& paths, const std::vector<DayAllocation>& allocations,
                 Rng& rng, std::vector<AuditRow>& audit, double preclick_window_days);

// Full pipeline step: build per-day problems from paths + aggregates, solve
// (stochastic or convex), materialize.
ImputeOutcome impute_paths(const std::vector<Path>& paths, const ChannelAggregates& agg,
                           bool convex_mode, uint64_t seed,
                           double preclick_window_days = 3.0);

void write_audit(const std::vector<AuditRow>& audit, const std::string& file);

}  // namespace lidda

// SPDX-License-Identifier: Apache-2.0
#include "lidda/imputation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace lidda {

void AllocationProblem::validate() const {
    if (click_weights.size() != clicks.size() && !clicks.empty())
        fail("allocation: click refs misaligned");
    if (path_weights.size() != path_ids.size() && !path_ids.empty())
        fail("allocation: path refs misaligned");
    for (double w : click_weights)
        if (w <= 0.0) fail("allocation: click weight must be > 0");
    for (double u : path_weights)
        if (u < 0.0) fail("allocation: path weight must be >= 0");
    if (budget < 0.0) fail("allocation: negative budget");
}

MemberBudget member_budget(
    const ChannelAggregates& agg,
    const std::map<std::pair<std::string, int64_t>, int64_t>& member_clicks) {
    MemberBudget mb;
    for (const auto& [key, cell] : agg.cells) {
        auto it = member_clicks.find(key);
        const int64_t clicks = it == member_clicks.end() ? 0 : it->second;
        if (clicks == 0) {
            mb.per_channel_day[key] = 0.0;
            continue;
        }
        if (cell.c_ext == 0)
            fail("member_budget: member clicks on (" + key.first + ", day " +
                 std::to_string(key.second) + ") but C_ext = 0");
        if (clicks > cell.c_ext)
            fail("member_budget: member clicks exceed C_ext on (" + key.first + ", day " +
                 std::to_string(key.second) + ")");
        const double i_mem = static_cast<double>(cell.i_ext) * static_cast<double>(clicks) /
                             static_cast<double>(cell.c_ext);
        mb.per_channel_day[key] = i_mem;
        mb.per_day[key.second] += i_mem;
    }
    return mb;
}

double clicker_rate(const ChannelAggregates& agg, const std::string& channel, int64_t day) {
    if (agg.i_own_total <= 0 || agg.c_own_total <= 0 || agg.i_own_clickers <= 0 ||
        agg.c_own_clickers <= 0)
        fail("clicker_rate: owned-channel totals must all be positive");
    auto it = agg.cells.find({channel, day});
    if (it == agg.cells.end())
        fail("clicker_rate: no aggregate cell for (" + channel + ", day " +
             std::to_string(day) + ")");
    if (it->second.c_ext == 0)
        fail("clicker_rate: C_ext = 0 for (" + channel + ", day " + std::to_string(day) + ")");
    const double r_all = static_cast<double>(agg.i_own_total) / agg.c_own_total;
    const double r_clickers = static_cast<double>(agg.i_own_clickers) / agg.c_own_clickers;
    const double alpha = r_clickers / r_all;
    const double r = alpha * static_cast<double>(it->second.i_ext) / it->second.c_ext;
    return std::max(1.0, r);
}

std::vector<int64_t> largest_remainder_round(const std::vector<double>& targets,
                                             int64_t total) {
    std::vector<int64_t> out(targets.size(), 0);
    if (targets.empty()) return out;
    double mass = 0.0;
    for (double t : targets) {
        if (t < 0.0) fail("largest_remainder_round: negative target");
        mass += t;
    }
    std::vector<double> scaled(targets.size(), 0.0);
    if (mass > 0.0) {
        for (size_t i = 0; i < targets.size(); ++i)
            scaled[i] = targets[i] * static_cast<double>(total) / mass;
    } else {
        // uniform fallback when all targets vanish
        for (size_t i = 0; i < targets.size(); ++i)
            scaled[i] = static_cast<double>(total) / static_cast<double>(targets.size());
    }
    int64_t assigned = 0;
    std::vector<std::pair<double, size_t>> fracs;
    fracs.reserve(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) {
        out[i] = static_cast<int64_t>(std::floor(scaled[i]));
        assigned += out[i];
        fracs.push_back({scaled[i] - std::floor(scaled[i]), i});
    }
    std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    int64_t remainder = total - assigned;
    for (size_t i = 0; remainder > 0 && i < fracs.size(); ++i, --remainder)
        out[fracs[i].second] += 1;
    // negative remainder cannot occur: floors sum to <= total
    return out;
}

StochasticAllocation allocate_stochastic(const AllocationProblem& problem, Rng& rng) {
    problem.validate();
    StochasticAllocation out;
    double pre = 0.0;
    out.click_imps.reserve(problem.click_weights.size());
    for (double w : problem.click_weights) {
        const double r = std::max(1.0, w);
        const int64_t m = rng.geometric_ge1(1.0 / r);
        out.click_imps.push_back(m);
        pre += static_cast<double>(m);
    }
    double leftover = problem.budget - pre;
    if (leftover < 0.0) {
        out.overdraw = true;
        out.warning = "allocation day " + std::to_string(problem.day) +
                      ": click draws exceed budget by " + format_double(-leftover) +
                      ", leftover clamped to 0";
        leftover = 0.0;
    }
    out.leftover = leftover;
    const int64_t target = static_cast<int64_t>(std::llround(leftover));
    const size_t n_paths = problem.path_weights.size();
    out.path_imps.assign(n_paths, 0);
    if (target <= 0) return out;
    if (n_paths == 0) {
        out.unallocated = leftover;
        out.warning += std::string(out.warning.empty() ? "" : "; ") + "allocation day " +
                       std::to_string(problem.day) + ": leftover " + format_double(leftover) +
                       " with no paths, reported unallocated";
        return out;
    }
    double weight_sum = 0.0;
    for (double u : problem.path_weights) weight_sum += u;
    std::vector<double> draws(n_paths, 0.0);
    if (weight_sum <= 0.0) {
        // uniform fallback over paths
        for (size_t k = 0; k < n_paths; ++k)
            draws[k] = static_cast<double>(
                rng.poisson(leftover / static_cast<double>(n_paths)));
    } else {
        for (size_t k = 0; k < n_paths; ++k)
            draws[k] = static_cast<double>(
                rng.poisson(leftover * problem.path_weights[k] / weight_sum));
    }
    double draw_sum = 0.0;
    for (double d : draws) draw_sum += d;
    if (draw_sum <= 0.0) {
        // degenerate Poisson outcome: fall back to the weights themselves
        draws = weight_sum > 0.0 ? problem.path_weights
                                 : std::vector<double>(n_paths, 1.0);
    }
    out.path_imps = largest_remainder_round(draws, target);
    return out;
}

namespace {

double budget_gap(const AllocationProblem& p, double lambda) {
    double total = 0.0;
    for (double w : p.click_weights) total += std::max(1.0, w / lambda);
    for (double u : p.path_weights) total += u / lambda;
    return total - p.budget;
}

void check_feasible(const AllocationProblem& p, double S_u) {
    const double J = static_cast<double>(p.click_weights.size());
    if (p.budget < J - 1e-12)
        fail("allocation day " + std::to_string(p.day) + ": infeasible, budget " +
             format_double(p.budget) + " < " + format_double(J) + " clicks");
    if (std::abs(p.budget - J) <= 1e-12 && S_u > 0.0 && !p.click_weights.empty())
        fail("allocation day " + std::to_string(p.day) +
             ": budget exactly covers the x >= 1 floor, no mass left for path weights");
}

}  // namespace

AllocationResult solve_joint(const AllocationProblem& problem) {
    problem.validate();
    const size_t J = problem.click_weights.size();
    double S_u = 0.0;
    for (double u : problem.path_weights) S_u += u;
    check_feasible(problem, S_u);

    AllocationResult res;
    res.x.assign(J, 1.0);
    res.y.assign(problem.path_weights.size(), 0.0);

    if (J == 0) {
        if (S_u <= 0.0) {
            if (problem.budget > 1e-12)
                fail("allocation day " + std::to_string(problem.day) +
                     ": positive budget but nothing to allocate to");
            res.lambda = 0.0;
            return res;
        }
        res.lambda = S_u / problem.budget;
        for (size_t k = 0; k < problem.path_weights.size(); ++k)
            res.y[k] = problem.path_weights[k] / res.lambda;
        return res;
    }

    if (S_u <= 0.0 && std::abs(problem.budget - static_cast<double>(J)) <= 1e-12) {
        // all clicks clamped at 1, any lambda >= max w is optimal; pin to max w
        res.lambda = *std::max_element(problem.click_weights.begin(),
                                       problem.click_weights.end());
        res.clamped = static_cast<int>(J);
        return res;
    }

    std::vector<double> w(problem.click_weights);
    std::sort(w.begin(), w.end());  // ascending; the m smallest get clamped
    std::vector<double> suffix(w.size() + 1, 0.0);
    for (size_t j = w.size(); j-- > 0;) suffix[j] = suffix[j + 1] + w[j];

    double lambda = -1.0;
    int m_star = -1;
    for (size_t m = 0; m <= w.size(); ++m) {
        const double denom = problem.budget - static_cast<double>(m);
        if (denom <= 0.0) break;
        const double lam = (suffix[m] + S_u) / denom;
        if (lam <= 0.0) continue;
        const bool low_ok = m == 0 || w[m - 1] <= lam * (1.0 + 1e-12);
        const bool high_ok = m == w.size() || lam < w[m] * (1.0 + 1e-12);
        if (low_ok && high_ok) {
            lambda = lam;
            m_star = static_cast<int>(m);
            break;
        }
    }
    if (lambda <= 0.0)
        fail("allocation day " + std::to_string(problem.day) +
             ": degenerate clamp scan (K=0 with budget != J?)");

    res.lambda = lambda;
    res.clamped = m_star;
    for (size_t j = 0; j < J; ++j)
        res.x[j] = std::max(1.0, problem.click_weights[j] / lambda);
    for (size_t k = 0; k < problem.path_weights.size(); ++k)
        res.y[k] = problem.path_weights[k] / lambda;
    return res;
}

double solve_lambda_bisection(const AllocationProblem& problem) {
    problem.validate();
    const size_t J = problem.click_weights.size();
    double S_u = 0.0, S_w = 0.0;
    for (double u : problem.path_weights) S_u += u;
    for (double w : problem.click_weights) S_w += w;
    check_feasible(problem, S_u);

    if (J == 0) {
        if (S_u <= 0.0) return 0.0;
        return S_u / problem.budget;
    }
    if (S_u <= 0.0 && std::abs(problem.budget - static_cast<double>(J)) <= 1e-12)
        return *std::max_element(problem.click_weights.begin(), problem.click_weights.end());

    double hi = std::max((S_w + S_u) / std::max(problem.budget - static_cast<double>(J), 1e-12),
                         1.0);
    while (budget_gap(problem, hi) > 0.0) hi *= 2.0;
    double lo = hi;
    while (budget_gap(problem, lo) < 0.0) lo *= 0.5;

    for (int it = 0; it < 500; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = budget_gap(problem, mid);
        if (std::abs(g) < 1e-10 || (hi - lo) < 1e-15 * hi) return mid;
        if (g > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double allocation_objective(const AllocationProblem& problem, const std::vector<double>& x,
                            const std::vector<double>& y) {
    double obj = 0.0;
    for (size_t j = 0; j < problem.click_weights.size(); ++j) {
        if (x[j] <= 0.0) return -std::numeric_limits<double>::infinity();
        obj += problem.click_weights[j] * std::log(x[j]);
    }
    for (size_t k = 0; k < problem.path_weights.size(); ++k) {
        if (problem.path_weights[k] == 0.0) continue;
        if (y[k] <= 0.0) return -std::numeric_limits<double>::infinity();
        obj += problem.path_weights[k] * std::log(y[k]);
    }
    return obj;
}

void materialize(std::vector<Path>& paths, const std::vector<DayAllocation>& allocations,
                 Rng& rng, std::vector<AuditRow>& audit, double preclick_window_days) {
    std::map<int64_t, size_t> path_index;
    for (size_t i = 0; i < paths.size(); ++i) path_index[paths[i].path_id] = i;

    // campaign catalog per channel, collected from observed events
    std::map<std::string, std::vector<std::pair<int64_t, std::vector<double>>>> catalog;
    {
        std::map<std::string, std::set<int64_t>> seen;
        for (const Path& p : paths)
            for (const Touchpoint& t : p.touchpoints)
                if (seen[t.channel].insert(t.campaign_id).second)
                    catalog[t.channel].push_back({t.campaign_id, t.campaign_emb});
        for (auto& [ch, v] : catalog) std::sort(v.begin(), v.end());
    }

    const int64_t window = static_cast<int64_t>(preclick_window_days * kSecondsPerDay);
    for (const DayAllocation& da : allocations) {
        for (size_t j = 0; j < da.problem.clicks.size(); ++j) {
            const ClickRef& ref = da.problem.clicks[j];
            const int64_t extra = da.click_imps[j] - 1;  // click stands for one exposure
            if (extra <= 0) continue;
            auto it = path_index.find(ref.path_id);
            if (it == path_index.end()) fail("materialize: unknown path in allocation");
            Path& p = paths[it->second];
            const Touchpoint& click = p.touchpoints[static_cast<size_t>(ref.touch_idx)];
            const int64_t hi_ts = click.ts - 1;
            const int64_t lo_ts = std::max<int64_t>(0, click.ts - window);
            for (int64_t e = 0; e < extra; ++e) {
                Touchpoint imp;
                imp.channel = click.channel;
                imp.action = "IMPRESSION";
                imp.ts = hi_ts < lo_ts ? hi_ts : rng.uniform_int(lo_ts, hi_ts);
                if (imp.ts < 0) imp.ts = 0;
                imp.campaign_id = click.campaign_id;
                imp.campaign_emb = click.campaign_emb;
                imp.imputed = true;
                p.touchpoints.push_back(std::move(imp));
            }
            audit.push_back({da.problem.day, ref.channel, "click",
                             std::to_string(ref.path_id) + ":" + std::to_string(ref.touch_idx),
                             extra});
        }
        // channel draw distribution for day-level imputes
        std::vector<std::pair<std::string, double>> shares(da.channel_budget_share.begin(),
                                                           da.channel_budget_share.end());
        double share_sum = 0.0;
        for (auto& [ch, s] : shares) share_sum += s;
        for (size_t k = 0; k < da.problem.path_ids.size(); ++k) {
            const int64_t count = da.path_imps[k];
            if (count <= 0) continue;
            auto it = path_index.find(da.problem.path_ids[k]);
            if (it == path_index.end()) fail("materialize: unknown path in allocation");
            Path& p = paths[it->second];
            const int64_t day_lo = da.problem.day * kSecondsPerDay;
            const int64_t day_hi =
                std::min(day_lo + kSecondsPerDay - 1, p.anchor_time);
            if (day_hi < day_lo) continue;
            std::map<std::string, int64_t> by_channel;
            for (int64_t e = 0; e < count; ++e) {
                std::string channel = shares.empty() ? "" : shares.back().first;
                if (share_sum > 0.0) {
                    double u = rng.uniform() * share_sum;
                    for (auto& [ch, s] : shares) {
                        if (u < s) {
                            channel = ch;
                            break;
                        }
                        u -= s;
                    }
                }
                if (channel.empty()) continue;
                Touchpoint imp;
                imp.channel = channel;
                imp.action = "IMPRESSION";
                imp.ts = rng.uniform_int(day_lo, day_hi);
                auto cat = catalog.find(channel);
                if (cat != catalog.end() && !cat->second.empty()) {
                    const auto& pick = cat->second[static_cast<size_t>(rng.uniform_int(
                        0, static_cast<int64_t>(cat->second.size()) - 1))];
                    imp.campaign_id = pick.first;
                    imp.campaign_emb = pick.second;
                } else {
                    imp.campaign_id = -1;
                }
                imp.imputed = true;
                by_channel[channel] += 1;
                p.touchpoints.push_back(std::move(imp));
            }
            for (auto& [ch, amount] : by_channel)
                audit.push_back({da.problem.day, ch, "path",
                                 std::to_string(da.problem.path_ids[k]), amount});
        }
    }
    for (Path& p : paths) {
        std::stable_sort(p.touchpoints.begin(), p.touchpoints.end(),
                         [](const Touchpoint& a, const Touchpoint& b) { return a.ts < b.ts; });
    }
}

ImputeOutcome impute_paths(const std::vector<Path>& paths, const ChannelAggregates& agg,
                           bool convex_mode, uint64_t seed, double preclick_window_days) {
    ImputeOutcome out;
    out.paths = paths;

    std::set<std::string> external;
    for (const auto& [key, cell] : agg.cells) external.insert(key.first);

    // member clicks by (channel, day) and per-path external click counts
    std::map<std::pair<std::string, int64_t>, int64_t> member_clicks;
    std::map<std::pair<std::string, int64_t>, std::vector<ClickRef>> clicks_by_cell;
    std::map<int64_t, int64_t> path_ext_clicks;
    std::map<int64_t, std::set<int64_t>> path_click_days;
    for (const Path& p : out.paths) {
        path_ext_clicks[p.path_id] = 0;
        for (int i = 0; i < p.length(); ++i) {
            const Touchpoint& t = p.touchpoints[static_cast<size_t>(i)];
            if (t.imputed || !external.count(t.channel) || t.action != "CLICK") continue;
            const int64_t day = day_of(t.ts);
            member_clicks[{t.channel, day}] += 1;
            clicks_by_cell[{t.channel, day}].push_back({p.path_id, i, t.channel});
            path_ext_clicks[p.path_id] += 1;
            path_click_days[p.path_id].insert(day);
        }
    }

    const MemberBudget mb = member_budget(agg, member_clicks);

    std::vector<DayAllocation> allocations;
    for (const auto& [day, budget] : mb.per_day) {
        if (budget <= 0.0) continue;
        DayAllocation da;
        da.problem.day = day;
        da.problem.budget = budget;
        for (const auto& [key, i_mem] : mb.per_channel_day) {
            if (key.second != day || i_mem <= 0.0) continue;
            da.channel_budget_share[key.first] = i_mem;
            const double r = clicker_rate(agg, key.first, day);
            auto it = clicks_by_cell.find(key);
            if (it == clicks_by_cell.end()) continue;
            for (const ClickRef& ref : it->second) {
                da.problem.clicks.push_back(ref);
                da.problem.click_weights.push_back(r);
            }
        }
        for (const Path& p : out.paths) {
            if (day_of(p.anchor_time) < day) continue;
            if (path_click_days[p.path_id].count(day)) continue;  // clicked that day
            da.problem.path_ids.push_back(p.path_id);
            da.problem.path_weights.push_back(
                static_cast<double>(path_ext_clicks[p.path_id]) + 1.0);
        }
        allocations.push_back(std::move(da));
    }

    for (DayAllocation& da : allocations) {
        if (convex_mode) {
            const AllocationResult res = solve_joint(da.problem);
            std::vector<double> all;
            all.insert(all.end(), res.x.begin(), res.x.end());
            all.insert(all.end(), res.y.begin(), res.y.end());
            const int64_t target = static_cast<int64_t>(std::llround(da.problem.budget));
            std::vector<int64_t> ints = largest_remainder_round(all, target);
            da.click_imps.assign(ints.begin(),
                                 ints.begin() + static_cast<int64_t>(res.x.size()));
            da.path_imps.assign(ints.begin() + static_cast<int64_t>(res.x.size()),
                                ints.end());
            for (auto& m : da.click_imps)
                if (m < 1) m = 1;
        } else {
            Rng rng(derive_seed(seed, "impute.day", static_cast<uint64_t>(da.problem.day)));
            StochasticAllocation sa = allocate_stochastic(da.problem, rng);
            da.click_imps = std::move(sa.click_imps);
            da.path_imps = std::move(sa.path_imps);
            if (!sa.warning.empty()) out.warnings.push_back(sa.warning);
        }
    }

    Rng mat_rng(derive_seed(seed, "impute.materialize"));
    materialize(out.paths, allocations, mat_rng, out.audit, preclick_window_days);
    return out;
}

void write_audit(const std::vector<AuditRow>& audit, const std::string& file) {
    std::ostringstream ss;
    ss << "day,channel,event_type,event_id,amount\n";
    for (const auto& row : audit)
        ss << row.day << "," << row.channel << "," << row.event_type << "," << row.event_id
           << "," << row.amount << "\n";
    write_text_file(file, ss.str());
}

}  // namespace lidda

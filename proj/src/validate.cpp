// SPDX-License-Identifier: Apache-2.0
#include "lidda/validate.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lidda/crediting.h"
#include "lidda/metrics.h"
#include "lidda/optim.h"
#include "lidda/tape.h"

namespace lidda {

PropensityFit fit_propensity(const std::vector<ExperimentRecord>& records, uint64_t seed) {
    if (records.empty()) fail("fit_propensity: no records");
    const int n = static_cast<int>(records.size());
    const int d = static_cast<int>(records[0].member_emb.size());
    int64_t treated = 0;
    for (const auto& r : records) treated += r.z;
    if (treated == 0 || treated == n)
        fail("fit_propensity: degenerate single-class assignment");

    // 80/20 split for a sanity AUC
    const int n_train = std::max(1, n - n / 5);
    Tensor x({n_train, d});
    Tensor y({n_train, 1});
    for (int i = 0; i < n_train; ++i) {
        for (int j = 0; j < d; ++j) x.at(i, j) = records[static_cast<size_t>(i)].member_emb[static_cast<size_t>(j)];
        y.at(i, 0) = records[static_cast<size_t>(i)].z;
    }

    Tensor w({d, 1});
    Tensor b({1, 1});
    Tensor gw({d, 1}), gb({1, 1});
    AdamState sw, sb;
    Tape tape;
    const int steps = 400;
    for (int it = 0; it < steps; ++it) {
        tape.reset();
        gw.fill(0.0);
        gb.fill(0.0);
        const int xw = tape.matmul(tape.constant(x), tape.leaf(w, &gw));
        const int logits = tape.add_bias(xw, tape.leaf(b, &gb));
        const int prob = tape.sigmoid(logits);
        const int loss = tape.bce(prob, tape.constant(y));
        tape.backward(loss);
        adam_step(w, gw, 0.05, sw);
        adam_step(b, gb, 0.05, sb);
    }

    PropensityFit fit;
    fit.weights.assign(w.v.begin(), w.v.end());
    fit.bias = b.v[0];
    fit.e.resize(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        double logit = fit.bias;
        for (int j = 0; j < d; ++j) logit += fit.weights[static_cast<size_t>(j)] * records[i].member_emb[static_cast<size_t>(j)];
        double e = 1.0 / (1.0 + std::exp(-logit));
        fit.e[i] = std::min(0.99, std::max(0.01, e));
    }
    if (n_train < n) {
        std::vector<double> scores;
        std::vector<int> zs;
        bool pos = false, neg = false;
        for (int i = n_train; i < n; ++i) {
            scores.push_back(fit.e[static_cast<size_t>(i)]);
            zs.push_back(records[static_cast<size_t>(i)].z);
            (records[static_cast<size_t>(i)].z ? pos : neg) = true;
        }
        fit.holdout_auc = (pos && neg) ? roc_auc(scores, zs) : 0.5;
    }
    return fit;
}

namespace {

// a_exp on a member index subsample; weighted = IPW, else raw control mean
double attribution_estimate(const std::vector<ExperimentRecord>& records,
                            const std::vector<double>* e, const std::vector<size_t>& idx) {
    double treated = 0, treated_conv = 0;
    double ctrl_w = 0, ctrl_wy = 0;
    for (size_t i : idx) {
        const ExperimentRecord& r = records[i];
        if (r.z == 1) {
            treated += 1;
            treated_conv += r.y;
        } else {
            const double w = e ? (*e)[i] / (1.0 - (*e)[i]) : 1.0;
            ctrl_w += w;
            ctrl_wy += w * r.y;
        }
    }
    if (treated == 0) fail("attribution estimate: no treated members in sample");
    if (treated_conv == 0) fail("attribution estimate: zero treatment conversions");
    if (ctrl_w == 0) fail("attribution estimate: empty control group in sample");
    const double p1 = treated_conv / treated;
    const double p1_cf = ctrl_wy / ctrl_w;
    return (p1 - p1_cf) / p1;
}

EstimateCI percentile_ci(double value, std::vector<double> reps) {
    EstimateCI ci;
    ci.value = value;
    ci.lo = percentile(reps, 2.5);
    ci.hi = percentile(std::move(reps), 97.5);
    return ci;
}

IpwResult attribution_with_ci(const std::vector<ExperimentRecord>& records,
                              const std::vector<double>* e, uint64_t seed, int reps) {
    IpwResult out;
    std::vector<size_t> all(records.size());
    std::iota(all.begin(), all.end(), size_t{0});
    {
        double treated = 0, treated_conv = 0, ctrl_w = 0, ctrl_wy = 0;
        for (size_t i : all) {
            const ExperimentRecord& r = records[i];
            if (r.z == 1) {
                treated += 1;
                treated_conv += r.y;
            } else {
                const double w = e ? (*e)[i] / (1.0 - (*e)[i]) : 1.0;
                ctrl_w += w;
                ctrl_wy += w * r.y;
            }
        }
        if (treated == 0 || ctrl_w == 0) fail("attribution: need both groups");
        if (treated_conv == 0) fail("attribution: zero treatment conversions");
        out.p1 = treated_conv / treated;
        out.p1_cf = ctrl_wy / ctrl_w;
    }
    const double point = (out.p1 - out.p1_cf) / out.p1;

    std::vector<double> boot(static_cast<size_t>(reps), 0.0);
    parallel_for(reps, [&](int64_t rep) {
        Rng rng(derive_seed(seed, "bootstrap", static_cast<uint64_t>(rep)));
        std::vector<size_t> idx(records.size());
        for (size_t i = 0; i < records.size(); ++i)
            idx[i] = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(records.size()) - 1));
        try {
            boot[static_cast<size_t>(rep)] = attribution_estimate(records, e, idx);
        } catch (const Error&) {
            boot[static_cast<size_t>(rep)] = point;  // degenerate resample
        }
    });
    out.a_exp = percentile_ci(point, std::move(boot));
    return out;
}

}  // namespace

IpwResult ipw_attribution(const std::vector<ExperimentRecord>& records,
                          const std::vector<double>& e, uint64_t seed, int reps) {
    if (e.size() != records.size()) fail("ipw_attribution: propensities misaligned");
    return attribution_with_ci(records, &e, seed, reps);
}

IpwResult raw_attribution(const std::vector<ExperimentRecord>& records, uint64_t seed,
                          int reps) {
    return attribution_with_ci(records, nullptr, seed, reps);
}

DdaEstimates dda_attribution_estimates(AttributionModel& model,
                                       const std::vector<ExperimentRecord>& records,
                                       const std::vector<Path>& paths,
                                       const std::vector<int64_t>& holdout_campaigns,
                                       const std::vector<double>& e, uint64_t seed,
                                       int reps) {
    if (records.size() != paths.size()) fail("dda estimates: paths misaligned");
    std::set<int64_t> holdout(holdout_campaigns.begin(), holdout_campaigns.end());

    // per-treated-member contributions
    std::vector<double> credit_h(records.size(), 0.0);
    std::vector<double> pi_full(records.size(), 0.0), pi_cf(records.size(), 0.0);
    bool any_treated = false;
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].z != 1) continue;
        any_treated = true;
        const Path& p = paths[i];
        if (p.length() > 0) {
            const std::vector<double> credits = model.attention_credits_of(p);
            for (int j = 0; j < p.length(); ++j)
                if (holdout.count(p.touchpoints[static_cast<size_t>(j)].campaign_id))
                    credit_h[i] += credits[static_cast<size_t>(j)];
        }
        pi_full[i] = model.predict(p);
        Path reduced = p;
        reduced.touchpoints.clear();
        for (const Touchpoint& t : p.touchpoints)
            if (!holdout.count(t.campaign_id)) reduced.touchpoints.push_back(t);
        pi_cf[i] = model.predict(reduced);
    }
    if (!any_treated) fail("dda estimates: treatment group empty");

    auto eval = [&](const std::vector<size_t>& idx, double* a_dda, double* plugin,
                    double* a_exp) {
        double n_t = 0, sum_credit = 0, sum_full = 0, sum_cf = 0;
        for (size_t i : idx) {
            if (records[i].z != 1) continue;
            n_t += 1;
            sum_credit += credit_h[i];
            sum_full += pi_full[i];
            sum_cf += pi_cf[i];
        }
        if (n_t == 0 || sum_full <= 0) fail("dda estimates: degenerate sample");
        *a_dda = sum_credit / n_t;
        *plugin = (sum_full - sum_cf) / sum_full;
        *a_exp = attribution_estimate(records, &e, idx);
    };

    std::vector<size_t> all(records.size());
    std::iota(all.begin(), all.end(), size_t{0});
    DdaEstimates out;
    double point_dda = 0, point_plugin = 0, point_exp = 0;
    eval(all, &point_dda, &point_plugin, &point_exp);

    std::vector<double> boot_dda(static_cast<size_t>(reps)), boot_plugin(static_cast<size_t>(reps)),
        boot_d(static_cast<size_t>(reps)), boot_exp(static_cast<size_t>(reps));
    parallel_for(reps, [&](int64_t rep) {
        Rng rng(derive_seed(seed, "dda.bootstrap", static_cast<uint64_t>(rep)));
        std::vector<size_t> idx(records.size());
        for (size_t i = 0; i < records.size(); ++i)
            idx[i] = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(records.size()) - 1));
        try {
            double d1, d2, d3;
            eval(idx, &d1, &d2, &d3);
            boot_dda[static_cast<size_t>(rep)] = d1;
            boot_plugin[static_cast<size_t>(rep)] = d2;
            boot_exp[static_cast<size_t>(rep)] = d3;
            boot_d[static_cast<size_t>(rep)] = d1 - d3;
        } catch (const Error&) {
            boot_dda[static_cast<size_t>(rep)] = point_dda;
            boot_plugin[static_cast<size_t>(rep)] = point_plugin;
            boot_exp[static_cast<size_t>(rep)] = point_exp;
            boot_d[static_cast<size_t>(rep)] = point_dda - point_exp;
        }
    });
    out.a_dda = percentile_ci(point_dda, std::move(boot_dda));
    out.a_dda_plugin = percentile_ci(point_plugin, std::move(boot_plugin));
    out.a_exp = percentile_ci(point_exp, std::move(boot_exp));
    out.d_dda = percentile_ci(point_dda - point_exp, std::move(boot_d));
    return out;
}

std::vector<WeightStability> bootstrap_weight_stability(
    const std::map<std::string, std::vector<double>>& weights_by_kind, uint64_t seed,
    int reps) {
    std::vector<WeightStability> out;
    for (const auto& [kind, weights] : weights_by_kind) {
        if (weights.empty()) fail("bootstrap_weight_stability: empty sample for " + kind);
        const double sample_mean = mean_of(weights);
        std::vector<double> biases(static_cast<size_t>(reps), 0.0);
        Rng rng(derive_seed(seed, "weight_stability." + kind));
        for (int rep = 0; rep < reps; ++rep) {
            double s = 0;
            for (size_t i = 0; i < weights.size(); ++i)
                s += weights[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(weights.size()) - 1))];
            biases[static_cast<size_t>(rep)] =
                s / static_cast<double>(weights.size()) - sample_mean;
        }
        WeightStability ws;
        ws.kind = kind;
        ws.mean_bias = mean_of(biases);
        ws.lo = percentile(biases, 2.5);
        ws.hi = percentile(biases, 97.5);
        ws.n = static_cast<int>(weights.size());
        out.push_back(std::move(ws));
    }
    return out;
}

AdResult anderson_darling(const std::vector<double>& sample_a,
                          const std::vector<double>& sample_b) {
    if (sample_a.size() < 5 || sample_b.size() < 5)
        fail("anderson_darling: samples must have >= 5 observations");
    // Scholz-Stephens k-sample A^2 (k = 2), continuous version, ties broken by
    // pooled order; flag at the alpha = 0.05 critical value of the
    // standardized statistic.
    const size_t n1 = sample_a.size(), n2 = sample_b.size();
    const size_t n = n1 + n2;
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(n);
    for (double v : sample_a) pooled.push_back({v, 0});
    for (double v : sample_b) pooled.push_back({v, 1});
    std::sort(pooled.begin(), pooled.end());

    double a2 = 0.0;
    double m1 = 0.0;  // count of sample-a among first j pooled
    for (size_t j = 1; j <= n - 1; ++j) {
        if (pooled[j - 1].second == 0) m1 += 1.0;
        const double jj = static_cast<double>(j);
        const double t1 = static_cast<double>(n) * m1 - jj * static_cast<double>(n1);
        const double t2 =
            static_cast<double>(n) * (jj - m1) - jj * static_cast<double>(n2);
        a2 += (t1 * t1 / n1 + t2 * t2 / n2) / (jj * (static_cast<double>(n) - jj));
    }
    a2 /= static_cast<double>(n);

    // variance of A^2 under H0 (Scholz & Stephens 1987, k = 2)
    const double N = static_cast<double>(n);
    double H = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2);
    double h = 0.0;
    for (size_t i = 1; i <= n - 1; ++i) h += 1.0 / static_cast<double>(i);
    // g = sum_{i<j} 1/((N-i) j) via the O(n) prefix form
    double g = 0.0;
    {
        double inner = 0.0;  // sum_{i=1}^{j-1} 1/(N - i)
        for (size_t j = 2; j <= n - 1; ++j) {
            inner += 1.0 / (N - static_cast<double>(j - 1));
            g += inner / static_cast<double>(j);
        }
    }
    const double k = 2.0;
    const double a = (4.0 * g - 6.0) * (k - 1.0) + (10.0 - 6.0 * g) * H;
    const double b = (2.0 * g - 4.0) * k * k + 8.0 * h * k +
                     (2.0 * g - 14.0 * h - 4.0) * H - 8.0 * h + 4.0 * g - 6.0;
    const double c = (6.0 * h + 2.0 * g - 2.0) * k * k + (4.0 * h - 4.0 * g + 6.0) * k +
                     (2.0 * h - 6.0) * H + 4.0 * h;
    const double d = (2.0 * h + 6.0) * k * k - 4.0 * h * k;
    const double var =
        (a * N * N * N + b * N * N + c * N + d) / ((N - 1.0) * (N - 2.0) * (N - 3.0));

    AdResult res;
    res.a2 = a2;
    const double sigma = std::sqrt(std::max(var, 1e-12));
    res.standardized = (a2 - (k - 1.0)) / sigma;
    res.flagged = res.standardized >= 1.960;  // alpha = 0.05, m = k-1 = 1
    return res;
}

PermutationReport permutation_test(const std::vector<Path>& paths,
                                   const std::vector<int>& labels, const ModelConfig& cfg,
                                   int trials, int passes, uint64_t seed) {
    if (trials < 1 || passes < 1) fail("permutation_test: trials/passes >= 1");
    PermutationReport report;
    report.baseline_auc.resize(static_cast<size_t>(trials));
    report.permuted_median_auc.resize(static_cast<size_t>(trials));
    const auto pairs = collect_pairs(paths);

    // shared holdout split, identical across trials
    Rng split_rng(derive_seed(seed, "perm.split"));
    std::vector<size_t> idx(paths.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    split_rng.shuffle(idx);
    const size_t n_hold = std::max<size_t>(1, paths.size() / 5);
    std::vector<Path> hold_paths, train_paths;
    std::vector<int> hold_labels, train_labels;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (i < n_hold) {
            hold_paths.push_back(paths[idx[i]]);
            hold_labels.push_back(labels[idx[i]]);
        } else {
            train_paths.push_back(paths[idx[i]]);
            train_labels.push_back(labels[idx[i]]);
        }
    }

    parallel_for(trials, [&](int64_t t) {
        ModelConfig trial_cfg = cfg;
        trial_cfg.seed = derive_seed(seed, "perm.trial", static_cast<uint64_t>(t));
        AttributionModel model(trial_cfg, Vocab::build(pairs));
        model.train(train_paths, train_labels, nullptr);
        report.baseline_auc[static_cast<size_t>(t)] =
            roc_auc(model.predict_all(hold_paths), hold_labels);
        std::vector<double> pass_aucs;
        for (int p = 0; p < passes; ++p) {
            Rng perm_rng(derive_seed(seed, "perm.pass",
                                     static_cast<uint64_t>(t) * 1000 +
                                         static_cast<uint64_t>(p)));
            pass_aucs.push_back(
                roc_auc(model.predict_all(hold_paths, &perm_rng), hold_labels));
        }
        report.permuted_median_auc[static_cast<size_t>(t)] = percentile(pass_aucs, 50.0);
    });

    report.baseline_median = percentile(report.baseline_auc, 50.0);
    report.permuted_median = percentile(report.permuted_median_auc, 50.0);
    report.baseline_p20 = percentile(report.baseline_auc, 20.0);
    int below = 0;
    for (double m : report.permuted_median_auc)
        if (m < report.baseline_p20) ++below;
    report.fraction_below_p20 = static_cast<double>(below) / trials;
    return report;
}

std::vector<AblationRow> ablation_run(const std::vector<Path>& paths,
                                      const std::vector<int>& labels, const ModelConfig& cfg,
                                      const std::vector<std::string>& channels,
                                      const std::vector<std::string>& variants,
                                      uint64_t seed) {
    // fixed train / validation / inference split shared across variants
    Rng split_rng(derive_seed(seed, "ablation.split"));
    std::vector<size_t> idx(paths.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    split_rng.shuffle(idx);
    const size_t n_val = paths.size() * 15 / 100;
    const size_t n_inf = paths.size() * 15 / 100;
    std::vector<Path> train_p, val_p, inf_p;
    std::vector<int> train_y, val_y;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (i < n_val) {
            val_p.push_back(paths[idx[i]]);
            val_y.push_back(labels[idx[i]]);
        } else if (i < n_val + n_inf) {
            inf_p.push_back(paths[idx[i]]);
        } else {
            train_p.push_back(paths[idx[i]]);
            train_y.push_back(labels[idx[i]]);
        }
    }

    const auto pairs = collect_pairs(paths);
    std::vector<AblationRow> rows(variants.size());
    parallel_for(static_cast<int64_t>(variants.size()), [&](int64_t vi) {
        ModelConfig vcfg = cfg.variant(variants[static_cast<size_t>(vi)]);
        vcfg.seed = derive_seed(seed, "ablation.model");  // same init stream per variant
        AttributionModel model(vcfg, Vocab::build(pairs));
        model.train(train_p, train_y, nullptr);
        AblationRow row;
        row.variant = variants[static_cast<size_t>(vi)];
        row.auc = roc_auc(model.predict_all(val_p), val_y);
        row.channel_mix = model.batch_channel_mix(inf_p, channels);
        rows[static_cast<size_t>(vi)] = std::move(row);
    });

    // % change and channel-mix MSD vs Baseline (percentage points)
    const AblationRow* base = nullptr;
    for (const auto& r : rows)
        if (r.variant == "Baseline") base = &r;
    if (!base) fail("ablation_run: variants must include Baseline");
    for (auto& r : rows) {
        r.auc_change_pct = (r.auc - base->auc) / base->auc * 100.0;
        double msd = 0.0;
        for (size_t c = 0; c < channels.size(); ++c) {
            const double d = (r.channel_mix[c] - base->channel_mix[c]) * 100.0;
            msd += d * d;
        }
        r.msd = channels.empty() ? 0.0 : msd / static_cast<double>(channels.size());
    }
    return rows;
}

RetrainReport retrain_stability(const std::vector<Path>& paths, const std::vector<int>& labels,
                                const ModelConfig& cfg, int subsets, uint64_t seed) {
    if (subsets < 2) fail("retrain_stability: subsets >= 2");
    // stratified 10% holdout, remainder split round-robin into disjoint subsets
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) fail("retrain_stability: need both classes");
    Rng rng(derive_seed(seed, "retrain.split"));
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<size_t> holdout;
    std::vector<std::vector<size_t>> parts(static_cast<size_t>(subsets));
    auto distribute = [&](const std::vector<size_t>& src) {
        const size_t n_hold = src.size() / 10;
        for (size_t i = 0; i < src.size(); ++i) {
            if (i < n_hold)
                holdout.push_back(src[i]);
            else
                parts[(i - n_hold) % static_cast<size_t>(subsets)].push_back(src[i]);
        }
    };
    distribute(pos);
    distribute(neg);
    if (holdout.empty()) fail("retrain_stability: insufficient data for a holdout");

    std::vector<Path> hold_paths;
    std::vector<int> hold_labels;
    for (size_t i : holdout) {
        hold_paths.push_back(paths[i]);
        hold_labels.push_back(labels[i]);
    }

    RetrainReport report;
    report.roc_aucs.resize(static_cast<size_t>(subsets));
    report.pr_aucs.resize(static_cast<size_t>(subsets));
    const auto pairs = collect_pairs(paths);
    parallel_for(subsets, [&](int64_t s) {
        std::vector<Path> sub_p;
        std::vector<int> sub_y;
        for (size_t i : parts[static_cast<size_t>(s)]) {
            sub_p.push_back(paths[i]);
            sub_y.push_back(labels[i]);
        }
        ModelConfig scfg = cfg;
        scfg.seed = derive_seed(seed, "retrain.model", static_cast<uint64_t>(s));
        scfg.holdout_frac = 0.0;  // common external holdout instead
        AttributionModel model(scfg, Vocab::build(pairs));
        model.train(sub_p, sub_y, nullptr);
        const std::vector<double> scores = model.predict_all(hold_paths);
        report.roc_aucs[static_cast<size_t>(s)] = roc_auc(scores, hold_labels);
        report.pr_aucs[static_cast<size_t>(s)] = pr_auc(scores, hold_labels);
    });
    auto mm = std::minmax_element(report.roc_aucs.begin(), report.roc_aucs.end());
    report.roc_range = *mm.second - *mm.first;
    auto mm2 = std::minmax_element(report.pr_aucs.begin(), report.pr_aucs.end());
    report.pr_range = *mm2.second - *mm2.first;
    return report;
}

}  // namespace lidda

// SPDX-License-Identifier: Apache-2.0
//
// Offline and experiment-style validation: propensity fitting + IPW
// estimators with percentile-bootstrap CIs, bootstrap attribution stability,
// two-sample Anderson-Darling drift detection, the attention-permutation
// interpretability test, the input-ablation harness, and retrain stability.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "lidda/common.h"
#include "lidda/journey.h"
#include "lidda/model.h"
#include "lidda/synthgen.h"

namespace lidda {

// --- IPW --------------------------------------------------------------------

struct PropensityFit {
    std::vector<double> e;  // clipped to [0.01, 0.99], aligned to records
    std::vector<double> weights;
    double bias = 0.0;
    double holdout_auc = 0.5;
};

// Logistic regression of Z on the member embedding, trained full-batch with
// the autodiff stack.
PropensityFit fit_propensity(const std::vector<ExperimentRecord>& records, uint64_t seed);

struct EstimateCI {
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct IpwResult {
    EstimateCI a_exp;
    double p1 = 0.0;     // treatment conversion rate
    double p1_cf = 0.0;  // weighted control rate
};

// a_exp = (P1 - P1_cf) / P1 with P1_cf the IPW-weighted control mean
// (w = e/(1-e)); percentile bootstrap over members.
IpwResult ipw_attribution(const std::vector<ExperimentRecord>& records,
                          const std::vector<double>& e, uint64_t seed, int reps = 1000);

// Unweighted control mean; demonstrates confounding bias.
IpwResult raw_attribution(const std::vector<ExperimentRecord>& records, uint64_t seed,
                          int reps = 1000);

struct DdaEstimates {
    EstimateCI a_dda;         // mean summed attention credit on holdout touches
    EstimateCI a_dda_plugin;  // from predicted probabilities with/without T^h
    EstimateCI d_dda;         // a_dda - a_exp, joint bootstrap
    EstimateCI a_exp;
};

DdaEstimates dda_attribution_estimates(AttributionModel& model,
                                       const std::vector<ExperimentRecord>& records,
                                       const std::vector<Path>& paths,
                                       const std::vector<int64_t>& holdout_campaigns,
                                       const std::vector<double>& e, uint64_t seed,
                                       int reps = 1000);

// --- stability --------------------------------------------------------------

struct WeightStability {
    std::string kind;
    double mean_bias = 0.0;
    double lo = 0.0;  // central 95% of bootstrap-mean bias
    double hi = 0.0;
    int n = 0;
};

std::vector<WeightStability> bootstrap_weight_stability(
    const std::map<std::string, std::vector<double>>& weights_by_kind, uint64_t seed,
    int reps = 100);

struct AdResult {
    double a2 = 0.0;           // two-sample A^2_kN (k = 2)
    double standardized = 0.0; // (A^2 - 1) / sigma_N
    bool flagged = false;      // exceeds the alpha = 0.05 critical value
};

AdResult anderson_darling(const std::vector<double>& sample_a,
                          const std::vector<double>& sample_b);

// --- interpretability / ablation / retraining --------------------------------

struct PermutationReport {
    std::vector<double> baseline_auc;         // one per trial
    std::vector<double> permuted_median_auc;  // per trial, median over passes
    double baseline_median = 0.0;
    double permuted_median = 0.0;
    double baseline_p20 = 0.0;
    double fraction_below_p20 = 0.0;
};

// Per trial: train a model (trial-derived seed), measure single-pass holdout
// AUC, then `passes` inference passes with per-path attention permutation.
PermutationReport permutation_test(const std::vector<Path>& paths,
                                   const std::vector<int>& labels, const ModelConfig& cfg,
                                   int trials = 30, int passes = 10,
                                   uint64_t seed = 1);

struct AblationRow {
    std::string variant;
    double auc = 0.0;
    double auc_change_pct = 0.0;  // vs Baseline
    double msd = 0.0;             // mean squared deviation of channel mix, pct points
    std::vector<double> channel_mix;
};

std::vector<AblationRow> ablation_run(const std::vector<Path>& paths,
                                      const std::vector<int>& labels, const ModelConfig& cfg,
                                      const std::vector<std::string>& channels,
                                      const std::vector<std::string>& variants,
                                      uint64_t seed);

struct RetrainReport {
    std::vector<double> roc_aucs;
    std::vector<double> pr_aucs;
    double roc_range = 0.0;
    double pr_range = 0.0;
};

RetrainReport retrain_stability(const std::vector<Path>& paths, const std::vector<int>& labels,
                                const ModelConfig& cfg, int subsets = 10, uint64_t seed = 1);

}  // namespace lidda

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace lidda {

// Rank-based ROC-AUC with tie handling (Mann-Whitney).
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision (step-interpolated PR curve).
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Spearman rank correlation; average ranks over ties. NaN when either input
// is constant or shorter than 2.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// KL(p || q) over aligned non-negative vectors (normalized internally, q
// clamped at 1e-12 where p > 0).
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

double mean_of(const std::vector<double>& values);

}  // namespace lidda

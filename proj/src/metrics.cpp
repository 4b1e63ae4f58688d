// SPDX-License-Identifier: Apache-2.0
#include "lidda/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lidda/common.h"

namespace lidda {
namespace {

// average ranks (1-based), ties share the mean rank
std::vector<double> ranks_of(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return cov / std::sqrt(va * vb);
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) fail("roc_auc: size mismatch");
    int64_t pos = 0, neg = 0;
    for (int y : labels) (y ? pos : neg) += 1;
    if (pos == 0 || neg == 0) fail("roc_auc: need both classes");
    const std::vector<double> r = ranks_of(scores);
    double rank_sum = 0.0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) rank_sum += r[i];
    const double u = rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) fail("pr_auc: size mismatch");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    int64_t total_pos = 0;
    for (int y : labels) total_pos += y;
    if (total_pos == 0) fail("pr_auc: no positives");
    double ap = 0.0;
    int64_t tp = 0;
    size_t i = 0;
    while (i < order.size()) {
        // process tied scores as one block
        size_t j = i;
        int64_t block_tp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            block_tp += labels[order[j]];
            ++j;
        }
        tp += block_tp;
        const double precision = static_cast<double>(tp) / static_cast<double>(j);
        ap += precision * static_cast<double>(block_tp);
        i = j;
    }
    return ap / static_cast<double>(total_pos);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail("spearman: size mismatch");
    if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return pearson(ranks_of(a), ranks_of(b));
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) fail("kl_divergence: size mismatch");
    double sp = 0, sq = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0 || q[i] < 0) fail("kl_divergence: negative mass");
        sp += p[i];
        sq += q[i];
    }
    if (sp <= 0 || sq <= 0) fail("kl_divergence: zero mass");
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i] / sp;
        if (pi <= 0.0) continue;
        const double qi = std::max(q[i] / sq, 1e-12);
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail("percentile: empty input");
    if (q < 0 || q > 100) fail("percentile: q outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) fail("mean_of: empty input");
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

}  // namespace lidda

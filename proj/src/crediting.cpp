// SPDX-License-Identifier: Apache-2.0
#include "lidda/crediting.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace lidda {

std::vector<double> attention_credits(const std::vector<Tensor>& attn, int path_len) {
    if (path_len == 0) return {};
    if (attn.empty()) fail("attention_credits: no heads");
    const int n = attn[0].rows();
    if (path_len > n) fail("attention_credits: path_len exceeds attention size");
    std::vector<double> mass(static_cast<size_t>(path_len), 0.0);
    for (const Tensor& a : attn) {
        if (a.rows() != n || a.cols() != n) fail("attention_credits: ragged heads");
        for (int q = 0; q < path_len; ++q)  // unmasked queries only
            for (int j = 0; j < path_len; ++j) mass[static_cast<size_t>(j)] += a.at(q, j);
    }
    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0) {
        std::fill(mass.begin(), mass.end(), 1.0 / path_len);
        return mass;
    }
    for (double& m : mass) m /= total;
    return mass;
}

std::vector<double> incremental_credits(AttributionModel& model, const Path& path) {
    const int len = path.length();
    if (len == 0) return {};
    Path prefix = path;
    prefix.touchpoints.clear();
    double prev = model.predict(prefix);
    std::vector<double> raw(static_cast<size_t>(len), 0.0);
    double total = 0.0;
    for (int k = 0; k < len; ++k) {
        prefix.touchpoints.push_back(path.touchpoints[static_cast<size_t>(k)]);
        const double p = model.predict(prefix);
        raw[static_cast<size_t>(k)] = std::max(0.0, p - prev);
        total += raw[static_cast<size_t>(k)];
        prev = p;
    }
    if (total <= 0.0) {
        std::fill(raw.begin(), raw.end(), 1.0 / len);
        return raw;
    }
    for (double& r : raw) r /= total;
    return raw;
}

std::vector<double> last_touch_credits(const Path& path) {
    if (path.length() == 0) fail("last_touch_credits: empty path");
    std::vector<double> credits(static_cast<size_t>(path.length()), 0.0);
    credits.back() = 1.0;
    return credits;
}

AttributionResult credit_path(AttributionModel& model, const Path& path, Method method) {
    AttributionResult r;
    r.path_id = path.path_id;
    r.method = method;
    switch (method) {
        case Method::attention:
            r.credits = model.attention_credits_of(path);
            break;
        case Method::incremental:
            r.credits = incremental_credits(model, path);
            break;
        case Method::last_touch:
            r.credits = path.length() == 0 ? std::vector<double>{}
                                           : last_touch_credits(path);
            break;
        case Method::ground_truth:
            fail("credit_path: ground_truth credits come from the generator");
    }
    return r;
}

RollupLevel rollup_level_from_name(const std::string& name) {
    if (name == "channel") return RollupLevel::channel;
    if (name == "campaign") return RollupLevel::campaign;
    if (name == "kind") return RollupLevel::kind;
    if (name == "day_gap") return RollupLevel::day_gap;
    fail("unknown rollup level: " + name);
}

std::vector<std::pair<std::string, double>> rollup(
    const std::vector<AttributionResult>& results, const std::vector<Path>& paths,
    RollupLevel level) {
    std::map<int64_t, const Path*> by_id;
    for (const Path& p : paths) by_id[p.path_id] = &p;

    std::map<std::string, double> acc;
    std::map<std::string, int64_t> counts;
    double total = 0.0;
    for (const AttributionResult& r : results) {
        auto it = by_id.find(r.path_id);
        if (it == by_id.end()) fail("rollup: no path for id " + std::to_string(r.path_id));
        const Path& p = *it->second;
        const size_t len = std::min(r.credits.size(), p.touchpoints.size());
        for (size_t j = 0; j < len; ++j) {
            const Touchpoint& t = p.touchpoints[j];
            std::string key;
            switch (level) {
                case RollupLevel::channel: key = t.channel; break;
                case RollupLevel::campaign: key = std::to_string(t.campaign_id); break;
                case RollupLevel::kind: key = t.channel + "." + t.action; break;
                case RollupLevel::day_gap:
                    key = std::to_string((p.anchor_time - t.ts) / kSecondsPerDay);
                    break;
            }
            acc[key] += r.credits[j];
            counts[key] += 1;
            total += r.credits[j];
        }
    }

    std::vector<std::pair<std::string, double>> out;
    if (level == RollupLevel::day_gap) {
        // decay curve: mean credit per touch at each gap, ordered numerically
        std::vector<std::pair<int64_t, double>> rows;
        for (auto& [key, sum] : acc)
            rows.push_back({std::stoll(key), sum / static_cast<double>(counts[key])});
        std::sort(rows.begin(), rows.end());
        for (auto& [gap, v] : rows) out.push_back({std::to_string(gap), v});
    } else {
        for (auto& [key, sum] : acc)
            out.push_back({key, total > 0.0 ? sum / total : 0.0});
    }
    return out;
}

void write_rollup(const std::vector<std::pair<std::string, double>>& shares,
                  const std::string& file) {
    std::ostringstream ss;
    ss << "key,share\n";
    for (auto& [key, share] : shares) ss << key << "," << format_double(share) << "\n";
    write_text_file(file, ss.str());
}

std::vector<std::pair<std::string, double>> read_rollup(const std::string& file) {
    std::istringstream in(read_text_file(file));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "key,share")
        fail("rollup: bad header in " + file);
    std::vector<std::pair<std::string, double>> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        if (parts.size() != 2) fail("rollup: expected 2 columns");
        out.push_back({trim(parts[0]), std::stod(parts[1])});
    }
    return out;
}

}  // namespace lidda

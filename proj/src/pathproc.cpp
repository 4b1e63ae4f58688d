// SPDX-License-Identifier: Apache-2.0
#include "lidda/pathproc.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace lidda {

using nlohmann::json;

SamplingPolicy SamplingPolicy::from_config(const Config& cfg) {
    SamplingPolicy p;
    if (cfg.has("sessionizable"))
        for (auto& ch : cfg.get_list("sessionizable")) p.sessionizable.insert(ch);
    for (const std::string& key : cfg.keys_with_prefix("ratio.")) {
        auto parts = split(key, '.');
        if (parts.size() != 3) fail("sampling policy: bad ratio key `" + key + "`");
        p.ratios[{parts[1], parts[2]}] = cfg.get_double(key);
    }
    p.validate();
    return p;
}

double SamplingPolicy::ratio_for(const std::string& channel, const std::string& action) const {
    auto it = ratios.find({channel, action});
    return it == ratios.end() ? 1.0 : it->second;
}

void SamplingPolicy::validate() const {
    for (auto& [key, r] : ratios)
        if (r <= 0.0 || r > 1.0)
            fail("sampling policy: ratio for (" + key.first + ", " + key.second +
                 ") outside (0, 1]");
}

ProcessedPath ProcessedPath::wrap(const Path& p) {
    ProcessedPath pp;
    pp.path = p;
    pp.original_len = p.length();
    pp.src.resize(p.touchpoints.size());
    std::iota(pp.src.begin(), pp.src.end(), 0);
    return pp;
}

ProcessedPath truncate(ProcessedPath pp, int n) {
    if (n < 1) fail("truncate: N >= 1 required");
    const int len = pp.path.length();
    if (len <= n) return pp;
    const int cut = len - n;
    pp.path.touchpoints.erase(pp.path.touchpoints.begin(), pp.path.touchpoints.begin() + cut);
    pp.src.erase(pp.src.begin(), pp.src.begin() + cut);
    return pp;
}

ProcessedPath sessionize(ProcessedPath pp, const SamplingPolicy& policy) {
    // (campaign, channel, day) -> processed positions, impressions only
    std::map<std::tuple<int64_t, std::string, int64_t>, std::vector<int>> groups;
    for (int i = 0; i < pp.path.length(); ++i) {
        const Touchpoint& t = pp.path.touchpoints[static_cast<size_t>(i)];
        if (t.action != "IMPRESSION") continue;
        if (!policy.sessionizable.count(t.channel)) continue;
        groups[{t.campaign_id, t.channel, day_of(t.ts)}].push_back(i);
    }
    std::vector<bool> remove(pp.path.touchpoints.size(), false);
    for (auto& [key, positions] : groups) {
        if (positions.size() < 2) continue;
        // most recent timestamp wins; ties resolved to the later position
        int survivor = positions[0];
        for (int pos : positions)
            if (pp.path.touchpoints[static_cast<size_t>(pos)].ts >=
                pp.path.touchpoints[static_cast<size_t>(survivor)].ts)
                survivor = pos;
        Touchpoint& s = pp.path.touchpoints[static_cast<size_t>(survivor)];
        for (int pos : positions) {
            if (pos == survivor) continue;
            const Touchpoint& t = pp.path.touchpoints[static_cast<size_t>(pos)];
            s.linkage.push_back(pp.src[static_cast<size_t>(pos)]);
            s.linkage.insert(s.linkage.end(), t.linkage.begin(), t.linkage.end());
            remove[static_cast<size_t>(pos)] = true;
        }
        std::sort(s.linkage.begin(), s.linkage.end());
    }
    ProcessedPath out;
    out.path = pp.path;
    out.path.touchpoints.clear();
    out.original_len = pp.original_len;
    out.drops = std::move(pp.drops);
    out.applied_ratio = std::move(pp.applied_ratio);
    for (size_t i = 0; i < pp.path.touchpoints.size(); ++i) {
        if (remove[i]) continue;
        out.path.touchpoints.push_back(pp.path.touchpoints[i]);
        out.src.push_back(pp.src[i]);
    }
    return out;
}

ProcessedPath downsample(ProcessedPath pp, const SamplingPolicy& policy, Rng& rng) {
    std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
    for (int i = 0; i < pp.path.length(); ++i) {
        const Touchpoint& t = pp.path.touchpoints[static_cast<size_t>(i)];
        groups[{t.channel, t.action}].push_back(i);
    }
    std::vector<bool> remove(pp.path.touchpoints.size(), false);
    for (auto& [key, positions] : groups) {
        const double ratio = policy.ratio_for(key.first, key.second);
        if (ratio >= 1.0) continue;
        auto applied = pp.applied_ratio.find(key);
        if (applied != pp.applied_ratio.end() && applied->second == ratio)
            continue;  // group already sampled at this ratio
        const int n = static_cast<int>(positions.size());
        const int keep = std::min(n, static_cast<int>(std::ceil(n * ratio)));
        pp.applied_ratio[key] = ratio;
        if (keep >= n) continue;
        // latest first; equal timestamps broken by a seeded draw
        std::vector<std::pair<std::pair<int64_t, uint64_t>, int>> order;
        order.reserve(positions.size());
        for (int pos : positions)
            order.push_back({{pp.path.touchpoints[static_cast<size_t>(pos)].ts,
                              rng.engine()()},
                             pos});
        std::sort(order.begin(), order.end());
        DropGroup dg;
        dg.channel = key.first;
        dg.action = key.second;
        dg.ratio = ratio;
        for (int i = 0; i < n - keep; ++i) {
            const int pos = order[static_cast<size_t>(i)].second;
            remove[static_cast<size_t>(pos)] = true;
            DroppedEvent de;
            de.src = pp.src[static_cast<size_t>(pos)];
            de.linkage = pp.path.touchpoints[static_cast<size_t>(pos)].linkage;
            dg.dropped.push_back(std::move(de));
        }
        std::sort(dg.dropped.begin(), dg.dropped.end(),
                  [](const DroppedEvent& a, const DroppedEvent& b) { return a.src < b.src; });
        bool merged = false;
        for (auto& existing : pp.drops) {
            if (existing.channel == dg.channel && existing.action == dg.action) {
                existing.ratio = dg.ratio;
                existing.dropped.insert(existing.dropped.end(), dg.dropped.begin(),
                                        dg.dropped.end());
                merged = true;
                break;
            }
        }
        if (!merged) pp.drops.push_back(std::move(dg));
    }
    ProcessedPath out;
    out.path = pp.path;
    out.path.touchpoints.clear();
    out.original_len = pp.original_len;
    out.drops = std::move(pp.drops);
    out.applied_ratio = std::move(pp.applied_ratio);
    for (size_t i = 0; i < pp.path.touchpoints.size(); ++i) {
        if (remove[i]) continue;
        out.path.touchpoints.push_back(pp.path.touchpoints[i]);
        out.src.push_back(pp.src[i]);
    }
    return out;
}

ProcessedPath preprocess(const Path& p, const SamplingPolicy& policy, int max_len, Rng& rng) {
    ProcessedPath pp = ProcessedPath::wrap(p);
    pp = sessionize(std::move(pp), policy);
    pp = downsample(std::move(pp), policy, rng);
    pp = truncate(std::move(pp), max_len);
    return pp;
}

AttributionResult redistribute_credit(const AttributionResult& result,
                                      const ProcessedPath& pp) {
    if (static_cast<int>(result.credits.size()) < pp.path.length())
        fail("redistribute_credit: result shorter than processed path");
    const int orig = pp.original_len;

    // per-event credit on the pre-processing index set, before linkage split
    std::vector<double> event_credit(static_cast<size_t>(orig), 0.0);
    std::vector<std::vector<int>> event_linkage(static_cast<size_t>(orig));

    std::vector<double> credit(pp.path.touchpoints.size());
    for (size_t i = 0; i < credit.size(); ++i) credit[i] = result.credits[i];

    // downsample recovery: survivors of a sampled group scale by the ratio,
    // dropped events get mean survivor credit x ratio
    for (const DropGroup& dg : pp.drops) {
        double mass = 0.0;
        int survivors = 0;
        for (int i = 0; i < pp.path.length(); ++i) {
            const Touchpoint& t = pp.path.touchpoints[static_cast<size_t>(i)];
            if (t.channel == dg.channel && t.action == dg.action) {
                mass += credit[static_cast<size_t>(i)];
                ++survivors;
            }
        }
        const double per_event = survivors > 0 ? mass / survivors : 0.0;
        for (int i = 0; i < pp.path.length(); ++i) {
            const Touchpoint& t = pp.path.touchpoints[static_cast<size_t>(i)];
            if (t.channel == dg.channel && t.action == dg.action)
                credit[static_cast<size_t>(i)] *= dg.ratio;
        }
        for (const DroppedEvent& de : dg.dropped) {
            if (de.src < 0 || de.src >= orig)
                fail("redistribute_credit: dropped id " + std::to_string(de.src) +
                     " not found");
            event_credit[static_cast<size_t>(de.src)] += per_event * dg.ratio;
            event_linkage[static_cast<size_t>(de.src)] = de.linkage;
        }
    }

    for (int i = 0; i < pp.path.length(); ++i) {
        const int src = pp.src[static_cast<size_t>(i)];
        if (src < 0 || src >= orig) fail("redistribute_credit: bad survivor id");
        event_credit[static_cast<size_t>(src)] += credit[static_cast<size_t>(i)];
        event_linkage[static_cast<size_t>(src)] =
            pp.path.touchpoints[static_cast<size_t>(i)].linkage;
    }

    // linkage expansion: even split over self + siblings
    std::vector<double> out(static_cast<size_t>(orig), 0.0);
    for (int e = 0; e < orig; ++e) {
        const double c = event_credit[static_cast<size_t>(e)];
        if (c == 0.0) continue;
        const auto& links = event_linkage[static_cast<size_t>(e)];
        const double share = c / static_cast<double>(1 + links.size());
        out[static_cast<size_t>(e)] += share;
        for (int link : links) {
            if (link < 0 || link >= orig)
                fail("redistribute_credit: linkage id " + std::to_string(link) + " not found");
            out[static_cast<size_t>(link)] += share;
        }
    }

    double total = 0.0;
    for (double c : out) total += c;
    if (total > 0.0)
        for (double& c : out) c /= total;

    AttributionResult expanded;
    expanded.path_id = result.path_id;
    expanded.method = result.method;
    expanded.credits = std::move(out);
    return expanded;
}

void write_processed(const std::vector<ProcessedPath>& pps, const std::string& paths_file,
                     const std::string& meta_file) {
    std::vector<Path> paths;
    paths.reserve(pps.size());
    for (const auto& pp : pps) paths.push_back(pp.path);
    write_paths(paths, paths_file);
    std::ostringstream ss;
    for (const auto& pp : pps) {
        json drops = json::array();
        for (const auto& dg : pp.drops) {
            json dropped = json::array();
            for (const auto& de : dg.dropped)
                dropped.push_back({{"src", de.src}, {"linkage", de.linkage}});
            drops.push_back({{"channel", dg.channel},
                             {"action", dg.action},
                             {"ratio", dg.ratio},
                             {"dropped", std::move(dropped)}});
        }
        json j{{"path_id", pp.path.path_id},
               {"original_len", pp.original_len},
               {"src", pp.src},
               {"drops", std::move(drops)}};
        ss << j.dump() << "\n";
    }
    write_text_file(meta_file, ss.str());
}

std::vector<ProcessedPath> read_processed(const std::string& paths_file,
                                          const std::string& meta_file) {
    std::vector<Path> paths = read_paths(paths_file);
    std::istringstream in(read_text_file(meta_file));
    std::vector<ProcessedPath> out;
    std::string line;
    size_t i = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (i >= paths.size()) fail("preprocess meta: more lines than paths");
        json j = json::parse(line);
        ProcessedPath pp;
        pp.path = std::move(paths[i]);
        if (j.at("path_id").get<int64_t>() != pp.path.path_id)
            fail("preprocess meta: path_id mismatch at line " + std::to_string(i + 1));
        pp.original_len = j.at("original_len").get<int>();
        pp.src = j.at("src").get<std::vector<int>>();
        for (const auto& dj : j.at("drops")) {
            DropGroup dg;
            dg.channel = dj.at("channel").get<std::string>();
            dg.action = dj.at("action").get<std::string>();
            dg.ratio = dj.at("ratio").get<double>();
            for (const auto& de : dj.at("dropped"))
                dg.dropped.push_back(
                    {de.at("src").get<int>(), de.at("linkage").get<std::vector<int>>()});
            pp.applied_ratio[{dg.channel, dg.action}] = dg.ratio;
            pp.drops.push_back(std::move(dg));
        }
        out.push_back(std::move(pp));
        ++i;
    }
    if (i != paths.size()) fail("preprocess meta: fewer lines than paths");
    return out;
}

}  // namespace lidda

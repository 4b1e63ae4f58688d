// SPDX-License-Identifier: Apache-2.0
#include "lidda/journey.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lidda/common.h"

namespace lidda {

using nlohmann::json;

Vocab Vocab::build(std::vector<std::pair<std::string, std::string>> pairs) {
    if (pairs.empty()) fail("vocab: empty pair list");
    std::sort(pairs.begin(), pairs.end());
    Vocab v;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (i > 0 && pairs[i] == pairs[i - 1])
            fail("vocab: duplicate pair (" + pairs[i].first + ", " + pairs[i].second + ")");
        TouchpointKind k{pairs[i].first, pairs[i].second, static_cast<int>(i) + 1};
        v.lookup_[pairs[i]] = k.vocab_index;
        v.kinds_.push_back(std::move(k));
    }
    return v;
}

int Vocab::index_of(const std::string& channel, const std::string& action) const {
    auto it = lookup_.find({channel, action});
    if (it == lookup_.end())
        fail("vocab: unknown (channel, action) pair (" + channel + ", " + action + ")");
    return it->second;
}

const TouchpointKind& Vocab::kind_at(int index) const {
    if (index < 1 || index > size()) fail("vocab: index out of range " + std::to_string(index));
    return kinds_[static_cast<size_t>(index) - 1];
}

std::string method_name(Method m) {
    switch (m) {
        case Method::attention: return "attention";
        case Method::incremental: return "incremental";
        case Method::last_touch: return "last_touch";
        case Method::ground_truth: return "ground_truth";
    }
    fail("method_name: bad enum");
}

Method method_from_name(const std::string& name) {
    if (name == "attention") return Method::attention;
    if (name == "incremental") return Method::incremental;
    if (name == "last_touch") return Method::last_touch;
    if (name == "ground_truth") return Method::ground_truth;
    fail("unknown attribution method: " + name);
}

void validate_path(const Path& p, int max_len) {
    if (max_len > 0 && p.length() > max_len)
        fail("path " + std::to_string(p.path_id) + ": length " + std::to_string(p.length()) +
             " exceeds max " + std::to_string(max_len));
    int64_t prev = INT64_MIN;
    for (size_t i = 0; i < p.touchpoints.size(); ++i) {
        const Touchpoint& t = p.touchpoints[i];
        if (t.ts < prev)
            fail("path " + std::to_string(p.path_id) + ": touchpoints out of time order");
        prev = t.ts;
        if (t.ts > p.anchor_time)
            fail("path " + std::to_string(p.path_id) + ": touchpoint after anchor_time");
        std::set<int> seen;
        for (int link : t.linkage) {
            if (link == static_cast<int>(i))
                fail("path " + std::to_string(p.path_id) + ": touchpoint links to itself");
            if (!seen.insert(link).second)
                fail("path " + std::to_string(p.path_id) + ": duplicate linkage id");
        }
    }
}

namespace {

json touchpoint_to_json(const Touchpoint& t) {
    return json{{"channel", t.channel},
                {"action", t.action},
                {"ts", t.ts},
                {"campaign_id", t.campaign_id},
                {"campaign_emb", t.campaign_emb},
                {"imputed", t.imputed},
                {"linkage", t.linkage}};
}

json path_to_json(const Path& p) {
    json tps = json::array();
    for (const auto& t : p.touchpoints) tps.push_back(touchpoint_to_json(t));
    return json{{"path_id", p.path_id},
                {"member_id", p.member_id},
                {"member_emb", p.member_emb},
                {"company_emb", p.company_emb},
                {"converted", p.converted},
                {"anchor_time", p.anchor_time},
                {"touchpoints", std::move(tps)}};
}

template <typename T>
T require(const json& j, const char* field, int lineno) {
    if (!j.contains(field))
        fail("line " + std::to_string(lineno) + ": missing field `" + field + "`");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        fail("line " + std::to_string(lineno) + ": bad type for field `" + field + "`");
    }
}

Path path_from_json(const json& j, int lineno) {
    Path p;
    p.path_id = require<int64_t>(j, "path_id", lineno);
    p.member_id = require<int64_t>(j, "member_id", lineno);
    p.member_emb = require<std::vector<double>>(j, "member_emb", lineno);
    p.company_emb = require<std::vector<double>>(j, "company_emb", lineno);
    p.converted = require<bool>(j, "converted", lineno);
    p.anchor_time = require<int64_t>(j, "anchor_time", lineno);
    if (!j.contains("touchpoints"))
        fail("line " + std::to_string(lineno) + ": missing field `touchpoints`");
    for (const auto& tj : j.at("touchpoints")) {
        Touchpoint t;
        t.channel = require<std::string>(tj, "channel", lineno);
        t.action = require<std::string>(tj, "action", lineno);
        t.ts = require<int64_t>(tj, "ts", lineno);
        t.campaign_id = require<int64_t>(tj, "campaign_id", lineno);
        t.campaign_emb = require<std::vector<double>>(tj, "campaign_emb", lineno);
        t.imputed = require<bool>(tj, "imputed", lineno);
        t.linkage = require<std::vector<int>>(tj, "linkage", lineno);
        p.touchpoints.push_back(std::move(t));
    }
    return p;
}

}  // namespace

std::vector<Path> read_paths(const std::string& file) {
    std::ifstream in(file);
    if (!in) fail("read_paths: missing file " + file);
    std::vector<Path> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        Path p = path_from_json(j, lineno);
        validate_path(p);
        out.push_back(std::move(p));
    }
    return out;
}

void write_paths(const std::vector<Path>& paths, const std::string& file, int max_len) {
    for (const Path& p : paths) validate_path(p, max_len);
    std::ostringstream ss;
    for (const Path& p : paths) ss << path_to_json(p).dump() << "\n";
    write_text_file(file, ss.str());
}

void write_aggregates(const ChannelAggregates& agg, const std::string& cells_file) {
    std::ostringstream ss;
    ss << "channel,day,i_ext,c_ext\n";
    for (const auto& [key, cell] : agg.cells)
        ss << key.first << "," << key.second << "," << cell.i_ext << "," << cell.c_ext << "\n";
    write_text_file(cells_file, ss.str());
}

ChannelAggregates read_aggregates(const std::string& cells_file) {
    ChannelAggregates agg;
    std::istringstream in(read_text_file(cells_file));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "channel,day,i_ext,c_ext")
        fail("aggregates: bad header in " + cells_file);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        if (parts.size() != 4)
            fail("aggregates line " + std::to_string(lineno) + ": expected 4 columns");
        ChannelAggregates::Cell cell;
        cell.i_ext = std::stoll(parts[2]);
        cell.c_ext = std::stoll(parts[3]);
        if (cell.i_ext < 0 || cell.c_ext < 0 || cell.c_ext > cell.i_ext)
            fail("aggregates line " + std::to_string(lineno) + ": counts violate 0 <= c <= i");
        agg.cells[{trim(parts[0]), std::stoll(parts[1])}] = cell;
    }
    return agg;
}

void write_owned_stats(const ChannelAggregates& agg, const std::string& file) {
    std::ostringstream ss;
    ss << "i_own_total,c_own_total,i_own_clickers,c_own_clickers\n";
    ss << agg.i_own_total << "," << agg.c_own_total << "," << agg.i_own_clickers << ","
       << agg.c_own_clickers << "\n";
    write_text_file(file, ss.str());
}

void read_owned_stats(ChannelAggregates& agg, const std::string& file) {
    std::istringstream in(read_text_file(file));
    std::string header, line;
    if (!std::getline(in, header) || !std::getline(in, line))
        fail("owned stats: malformed " + file);
    auto parts = split(trim(line), ',');
    if (parts.size() != 4) fail("owned stats: expected 4 columns");
    agg.i_own_total = std::stoll(parts[0]);
    agg.c_own_total = std::stoll(parts[1]);
    agg.i_own_clickers = std::stoll(parts[2]);
    agg.c_own_clickers = std::stoll(parts[3]);
}

void validate_credits(const AttributionResult& r, int path_len) {
    if (static_cast<int>(r.credits.size()) < path_len)
        fail("attribution " + std::to_string(r.path_id) + ": credit vector shorter than path");
    double total = 0.0;
    for (size_t i = 0; i < r.credits.size(); ++i) {
        if (r.credits[i] < 0.0)
            fail("attribution " + std::to_string(r.path_id) + ": negative credit");
        if (static_cast<int>(i) >= path_len && r.credits[i] != 0.0)
            fail("attribution " + std::to_string(r.path_id) + ": nonzero credit at padding");
        total += r.credits[i];
    }
    if (path_len > 0 && std::abs(total - 1.0) > 1e-6)
        fail("attribution " + std::to_string(r.path_id) + ": credits sum to " +
             format_double(total));
}

std::vector<AttributionResult> read_attributions(const std::string& file) {
    std::ifstream in(file);
    if (!in) fail("read_attributions: missing file " + file);
    std::vector<AttributionResult> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        AttributionResult r;
        r.path_id = require<int64_t>(j, "path_id", lineno);
        r.method = method_from_name(require<std::string>(j, "method", lineno));
        r.credits = require<std::vector<double>>(j, "credits", lineno);
        out.push_back(std::move(r));
    }
    return out;
}

void write_attributions(const std::vector<AttributionResult>& results,
                        const std::string& file) {
    std::ostringstream ss;
    for (const auto& r : results) {
        json j{{"path_id", r.path_id},
               {"method", method_name(r.method)},
               {"credits", r.credits}};
        ss << j.dump() << "\n";
    }
    write_text_file(file, ss.str());
}

}  // namespace lidda

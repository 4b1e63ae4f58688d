// SPDX-License-Identifier: Apache-2.0
//
// Canonical data model shared by every pipeline stage: touchpoints, paths,
// channel aggregates, attribution outputs, and their deterministic file
// formats (JSONL for paths/attributions, CSV for aggregates). Types are
// immutable after construction by convention; I/O is single-writer.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lidda {

constexpr int64_t kSecondsPerDay = 86400;

// Epoch day index and day-of-week (epoch was a Thursday).
inline int64_t day_of(int64_t ts) {
    return ts >= 0 ? ts / kSecondsPerDay : (ts - kSecondsPerDay + 1) / kSecondsPerDay;
}
inline int day_of_week(int64_t ts) {
    return static_cast<int>(((day_of(ts) + 4) % 7 + 7) % 7);
}

struct TouchpointKind {
    std::string channel;
    std::string action;  // impression, click, open, send
    int vocab_index = 0;  // 1..K; 0 reserved for padding

    bool operator==(const TouchpointKind& o) const {
        return channel == o.channel && action == o.action;
    }
};

// Bijection over distinct (channel, action) pairs; indices 1..K assigned in
// lexicographic order, 0 reserved.
class Vocab {
public:
    static Vocab build(std::vector<std::pair<std::string, std::string>> pairs);

    int index_of(const std::string& channel, const std::string& action) const;
    const TouchpointKind& kind_at(int index) const;  // index in 1..K
    int size() const { return static_cast<int>(kinds_.size()); }  // K

private:
    std::vector<TouchpointKind> kinds_;  // kinds_[i] has vocab_index i+1
    std::map<std::pair<std::string, std::string>, int> lookup_;
};

struct Touchpoint {
    std::string channel;
    std::string action;
    int64_t ts = 0;  // seconds since epoch, UTC
    int64_t campaign_id = 0;
    std::vector<double> campaign_emb;  // length d_mcid
    bool imputed = false;
    std::vector<int> linkage;  // pre-processing indices of collapsed siblings
};

struct Path {
    int64_t path_id = 0;
    int64_t member_id = 0;
    std::vector<double> member_emb;   // length D_M
    std::vector<double> company_emb;  // length D_C
    bool converted = false;
    int64_t anchor_time = 0;  // conversion time, or sampling date for negatives
    std::vector<Touchpoint> touchpoints;  // non-decreasing ts, all <= anchor_time

    int length() const { return static_cast<int>(touchpoints.size()); }
};

// Per (channel, day) external aggregates plus global owned-channel totals.
struct ChannelAggregates {
    struct Cell {
        int64_t i_ext = 0;
        int64_t c_ext = 0;
    };
    std::map<std::pair<std::string, int64_t>, Cell> cells;  // (channel, day)
    int64_t i_own_total = 0;
    int64_t c_own_total = 0;
    int64_t i_own_clickers = 0;
    int64_t c_own_clickers = 0;
};

enum class Method { attention, incremental, last_touch, ground_truth };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct AttributionResult {
    int64_t path_id = 0;
    Method method = Method::attention;
    std::vector<double> credits;  // aligned to touchpoints; >=0, sum 1 +- 1e-6
};

// --- operations ---------------------------------------------------------

// JSONL, one Path object per line; rejects malformed lines with the line
// number, unsorted touchpoints with the path_id.
std::vector<Path> read_paths(const std::string& file);
// Round-trips bit-exactly through read_paths. Validates every path before any
// write; max_len > 0 additionally enforces the post-preprocessing bound.
void write_paths(const std::vector<Path>& paths, const std::string& file, int max_len = 0);

// Structural invariants (sortedness, anchor bound, linkage sanity). Throws.
void validate_path(const Path& p, int max_len = 0);

void write_aggregates(const ChannelAggregates& agg, const std::string& cells_file);
ChannelAggregates read_aggregates(const std::string& cells_file);
void write_owned_stats(const ChannelAggregates& agg, const std::string& file);
void read_owned_stats(ChannelAggregates& agg, const std::string& file);

std::vector<AttributionResult> read_attributions(const std::string& file);
void write_attributions(const std::vector<AttributionResult>& results, const std::string& file);

void validate_credits(const AttributionResult& r, int path_len);

}  // namespace lidda

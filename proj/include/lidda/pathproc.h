// SPDX-License-Identifier: Apache-2.0
//
// Path preprocessing: sessionization (same-campaign same-day impressions
// collapse to the most recent one, siblings recorded as linkage), deterministic
// downsampling (keep the ceil(n*ratio) latest per (channel, action) group),
// truncation to the last N touches, and the inverse credit expansion back onto
// the pre-processing event set.
//
// Event "ids" are indices into the path as it entered preprocessing.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lidda/common.h"
#include "lidda/journey.h"

namespace lidda {

struct SamplingPolicy {
    std::map<std::pair<std::string, std::string>, double> ratios;  // (0, 1]
    std::set<std::string> sessionizable;

    static SamplingPolicy from_config(const Config& cfg);
    double ratio_for(const std::string& channel, const std::string& action) const;
    void validate() const;
};

struct DroppedEvent {
    int src = 0;  // pre-processing index
    std::vector<int> linkage;
};

struct DropGroup {
    std::string channel;
    std::string action;
    double ratio = 1.0;
    std::vector<DroppedEvent> dropped;
};

struct ProcessedPath {
    Path path;             // surviving touchpoints, linkage populated
    std::vector<int> src;  // processed position -> pre-processing index
    std::vector<DropGroup> drops;
    std::map<std::pair<std::string, std::string>, double> applied_ratio;
    int original_len = 0;

    static ProcessedPath wrap(const Path& p);
};

ProcessedPath truncate(ProcessedPath pp, int n);
ProcessedPath sessionize(ProcessedPath pp, const SamplingPolicy& policy);
ProcessedPath downsample(ProcessedPath pp, const SamplingPolicy& policy, Rng& rng);

// sessionize -> downsample -> truncate
ProcessedPath preprocess(const Path& p, const SamplingPolicy& policy, int max_len, Rng& rng);

// Expands credits aligned to the processed path back onto the pre-processing
// event set: downsample groups recover dropped events at (survivor per-event
// credit x retention ratio, survivors rescaled the same way), every event then
// splits its credit evenly across itself plus its linkage, and the full vector
// is renormalized. Truncated events get 0.
AttributionResult redistribute_credit(const AttributionResult& result,
                                      const ProcessedPath& pp);

void write_processed(const std::vector<ProcessedPath>& pps, const std::string& paths_file,
                     const std::string& meta_file);
std::vector<ProcessedPath> read_processed(const std::string& paths_file,
                                          const std::string& meta_file);

}  // namespace lidda

// SPDX-License-Identifier: Apache-2.0
//
// Synthetic journey generator with a known conversion model, so removal
// counterfactuals are available in closed form. Conversion for member i:
//   p = sigmoid(base + sum_j contrib_j + m_eff*<w_M,E_M> + c_eff*<w_C,E_C>)
//   contrib_j = (effect(kind_j) + camp_eff*<w_K, emb_j>) * exp(-decay*dt_j)
// with dt_j the (continuous) days between touch j and the anchor.
//
// External channels generate impressions that are stripped from paths and
// rolled into daily aggregates; each impression click-throughs with the
// channel's ctr and the click stays in the path as a proxy event.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lidda/common.h"
#include "lidda/journey.h"

namespace lidda {

struct ChannelSpec {
    std::string name;
    double rate = 0.0;  // expected base events per member-day
    bool external = false;
    double ctr = 0.0;  // external only: P(click | impression)
    std::vector<std::pair<std::string, double>> action_mix;  // owned only
};

struct GeneratorConfig {
    uint64_t seed = 1;
    int n_members = 1000;
    int horizon_days = 30;
    int d_mcid = 8;
    int d_member = 4;
    int d_company = 4;
    int n_campaigns = 12;
    double base_logit = -3.0;
    double decay = 0.08;
    double member_effect = 1.0;
    double company_effect = 0.5;
    double campaign_effect = 0.0;
    double negative_keep = 1.0;
    double confounding = 0.0;
    std::vector<ChannelSpec> channels;
    std::map<std::pair<std::string, std::string>, double> effects;  // (channel, action)

    static GeneratorConfig from_config(const Config& cfg);
    void validate() const;
};

struct GroundTruth {
    std::map<int64_t, std::vector<double>> credits;  // converting paths only
    std::map<std::string, double> channel_share;
};

struct Dataset {
    std::vector<Path> paths;
    ChannelAggregates aggregates;
    GroundTruth ground_truth;
};

struct ExperimentRecord {
    int64_t member_id = 0;
    int z = 0;  // treatment indicator
    int y = 0;  // conversion outcome
    std::vector<double> member_emb;
    double e_true = 0.5;  // generator's assignment propensity
    double p_full = 0.0;  // treated: p(S1); control: p of realized path
    double p_cf = 0.0;    // treated: p(S1 - T^h)
};

struct Experiment {
    std::vector<ExperimentRecord> records;
    std::vector<Path> paths;  // aligned to records, path_id == member_id
    std::vector<int64_t> holdout_campaigns;
    double true_attribution = 0.0;  // a(T^h) over the treated sample, exact
};

class Generator {
public:
    explicit Generator(GeneratorConfig cfg);

    const GeneratorConfig& config() const { return cfg_; }

    Dataset generate_dataset() const;
    Experiment generate_experiment(const std::vector<int64_t>& holdout_campaigns) const;

    // Exact removal-counterfactual credits for a path under the generator's
    // parameters. Exact when the path carries every generated touch (i.e. no
    // external channel stripped impressions).
    std::vector<double> ground_truth_credits(const Path& path) const;

    // Closed-form conversion probability of an arbitrary touch set.
    double conversion_probability(const Path& path) const;

    std::vector<std::pair<std::string, std::string>> kind_pairs() const;
    const std::vector<double>& campaign_embedding(int64_t campaign_id) const;
    std::string campaign_channel(int64_t campaign_id) const;

private:
    struct Campaign {
        int64_t id;
        std::string channel;
        std::vector<double> emb;
    };

    double touch_contrib(const Touchpoint& t, int64_t anchor) const;
    double entity_logit(const std::vector<double>& m, const std::vector<double>& c) const;

    GeneratorConfig cfg_;
    std::vector<Campaign> campaigns_;
    std::map<std::string, std::vector<int>> campaigns_by_channel_;
    std::vector<double> w_member_, w_company_, w_campaign_;
};

// ground_truth.jsonl + `key,share` CSV.
void write_ground_truth(const GroundTruth& gt, const std::string& jsonl_file,
                        const std::string& shares_csv);
GroundTruth read_ground_truth(const std::string& jsonl_file, const std::string& shares_csv);

void write_experiment(const Experiment& exp, const std::string& records_file,
                      const std::string& meta_file);
Experiment read_experiment(const std::string& records_file, const std::string& meta_file,
                           const std::vector<Path>& paths);

}  // namespace lidda

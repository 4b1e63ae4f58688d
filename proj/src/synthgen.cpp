// SPDX-License-Identifier: Apache-2.0
#include "lidda/synthgen.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace lidda {

using nlohmann::json;

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> draw_vector(Rng& rng, int dim, double scale) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal() * scale;
    return v;
}

}  // namespace

GeneratorConfig GeneratorConfig::from_config(const Config& cfg) {
    GeneratorConfig g;
    g.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    g.n_members = static_cast<int>(cfg.get_int("n_members"));
    g.horizon_days = static_cast<int>(cfg.get_int("horizon_days"));
    g.d_mcid = static_cast<int>(cfg.get_int("d_mcid", 8));
    g.d_member = static_cast<int>(cfg.get_int("d_member", 4));
    g.d_company = static_cast<int>(cfg.get_int("d_company", 4));
    g.n_campaigns = static_cast<int>(cfg.get_int("n_campaigns", 12));
    g.base_logit = cfg.get_double("base_logit", -3.0);
    g.decay = cfg.get_double("decay", 0.08);
    g.member_effect = cfg.get_double("member_effect", 1.0);
    g.company_effect = cfg.get_double("company_effect", 0.5);
    g.campaign_effect = cfg.get_double("campaign_effect", 0.0);
    g.negative_keep = cfg.get_double("negative_keep", 1.0);
    g.confounding = cfg.get_double("confounding", 0.0);
    for (const std::string& name : cfg.get_list("channels")) {
        ChannelSpec ch;
        ch.name = name;
        ch.rate = cfg.get_double("channel." + name + ".rate");
        ch.external = cfg.get_bool("channel." + name + ".external", false);
        if (ch.external) {
            ch.ctr = cfg.get_double("channel." + name + ".ctr", 0.1);
        } else {
            for (const std::string& entry : cfg.get_list("channel." + name + ".actions")) {
                auto parts = split(entry, ':');
                if (parts.size() != 2)
                    fail("generator config: bad action mix entry `" + entry + "`");
                ch.action_mix.emplace_back(trim(parts[0]), std::stod(parts[1]));
            }
        }
        g.channels.push_back(std::move(ch));
    }
    for (const std::string& key : cfg.keys_with_prefix("effect.")) {
        auto parts = split(key, '.');
        if (parts.size() != 3) fail("generator config: bad effect key `" + key + "`");
        g.effects[{parts[1], parts[2]}] = cfg.get_double(key);
    }
    g.validate();
    return g;
}

void GeneratorConfig::validate() const {
    if (n_members < 1) fail("generator config: n_members >= 1 required");
    if (horizon_days < 1) fail("generator config: horizon_days >= 1 required");
    if (channels.empty()) fail("generator config: at least one channel required");
    for (const auto& ch : channels) {
        if (ch.rate < 0) fail("generator config: negative rate for channel " + ch.name);
        if (ch.external) {
            if (ch.ctr < 0 || ch.ctr > 1)
                fail("generator config: ctr outside [0,1] for channel " + ch.name);
        } else {
            double total = 0;
            for (auto& [a, p] : ch.action_mix) {
                if (p < 0 || p > 1)
                    fail("generator config: action probability outside [0,1] in " + ch.name);
                total += p;
            }
            if (!ch.action_mix.empty() && std::abs(total - 1.0) > 1e-9)
                fail("generator config: action mix of " + ch.name + " must sum to 1");
        }
    }
    if (negative_keep < 0 || negative_keep > 1)
        fail("generator config: negative_keep outside [0,1]");
}

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng camp_rng(derive_seed(cfg_.seed, "campaigns"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_mcid));
    for (int i = 0; i < cfg_.n_campaigns; ++i) {
        Campaign c;
        c.id = i;
        c.channel = cfg_.channels[static_cast<size_t>(i) % cfg_.channels.size()].name;
        c.emb = draw_vector(camp_rng, cfg_.d_mcid, scale);
        campaigns_by_channel_[c.channel].push_back(i);
        campaigns_.push_back(std::move(c));
    }
    for (const auto& ch : cfg_.channels)
        if (ch.rate > 0 && campaigns_by_channel_[ch.name].empty())
            fail("generator: channel " + ch.name + " has rate > 0 but no campaigns");
    Rng w_rng(derive_seed(cfg_.seed, "weights"));
    w_member_ = draw_vector(w_rng, cfg_.d_member, 1.0);
    w_company_ = draw_vector(w_rng, cfg_.d_company, 1.0);
    w_campaign_ = draw_vector(w_rng, cfg_.d_mcid, 1.0);
}

std::vector<std::pair<std::string, std::string>> Generator::kind_pairs() const {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& ch : cfg_.channels) {
        if (ch.external) {
            pairs.emplace_back(ch.name, "IMPRESSION");
            pairs.emplace_back(ch.name, "CLICK");
        } else {
            for (auto& [a, p] : ch.action_mix) pairs.emplace_back(ch.name, a);
        }
    }
    return pairs;
}

const std::vector<double>& Generator::campaign_embedding(int64_t campaign_id) const {
    if (campaign_id < 0 || campaign_id >= static_cast<int64_t>(campaigns_.size()))
        fail("generator: unknown campaign " + std::to_string(campaign_id));
    return campaigns_[static_cast<size_t>(campaign_id)].emb;
}

std::string Generator::campaign_channel(int64_t campaign_id) const {
    if (campaign_id < 0 || campaign_id >= static_cast<int64_t>(campaigns_.size()))
        fail("generator: unknown campaign " + std::to_string(campaign_id));
    return campaigns_[static_cast<size_t>(campaign_id)].channel;
}

double Generator::touch_contrib(const Touchpoint& t, int64_t anchor) const {
    auto it = cfg_.effects.find({t.channel, t.action});
    const double base_effect = it == cfg_.effects.end() ? 0.0 : it->second;
    double camp = 0.0;
    if (cfg_.campaign_effect != 0.0) {
        for (size_t i = 0; i < t.campaign_emb.size() && i < w_campaign_.size(); ++i)
            camp += w_campaign_[i] * t.campaign_emb[i];
        camp *= cfg_.campaign_effect;
    }
    const double dt_days = static_cast<double>(anchor - t.ts) / kSecondsPerDay;
    return (base_effect + camp) * std::exp(-cfg_.decay * dt_days);
}

double Generator::entity_logit(const std::vector<double>& m,
                               const std::vector<double>& c) const {
    double out = 0.0;
    for (size_t i = 0; i < m.size() && i < w_member_.size(); ++i)
        out += cfg_.member_effect * w_member_[i] * m[i];
    for (size_t i = 0; i < c.size() && i < w_company_.size(); ++i)
        out += cfg_.company_effect * w_company_[i] * c[i];
    return out;
}

double Generator::conversion_probability(const Path& path) const {
    double logit = cfg_.base_logit + entity_logit(path.member_emb, path.company_emb);
    for (const auto& t : path.touchpoints) logit += touch_contrib(t, path.anchor_time);
    return sigmoid(logit);
}

std::vector<double> Generator::ground_truth_credits(const Path& path) const {
    const double logit_base = [&] {
        double l = cfg_.base_logit + entity_logit(path.member_emb, path.company_emb);
        for (const auto& t : path.touchpoints) l += touch_contrib(t, path.anchor_time);
        return l;
    }();
    const double p_full = sigmoid(logit_base);
    std::vector<double> deltas(path.touchpoints.size());
    double total = 0.0;
    for (size_t j = 0; j < path.touchpoints.size(); ++j) {
        const double p_minus =
            sigmoid(logit_base - touch_contrib(path.touchpoints[j], path.anchor_time));
        deltas[j] = std::max(0.0, p_full - p_minus);
        total += deltas[j];
    }
    if (total > 0.0)
        for (double& d : deltas) d /= total;
    else
        std::fill(deltas.begin(), deltas.end(), 0.0);
    return deltas;
}

namespace {

struct RawTouch {
    Touchpoint tp;
    bool hidden = false;  // stripped external impression
};

// Touches for one member on one channel over the horizon; hidden flags mark
// external impressions destined for the aggregates.
void gen_channel_touches(const ChannelSpec& ch, Rng& rng, int horizon_days,
                         const std::vector<int>& channel_campaigns, const Generator& gen,
                         std::vector<RawTouch>& out) {
    for (int day = 0; day < horizon_days; ++day) {
        const int64_t n = rng.poisson(ch.rate);
        for (int64_t e = 0; e < n; ++e) {
            const int64_t day_start = static_cast<int64_t>(day) * kSecondsPerDay;
            const int64_t ts = day_start + rng.uniform_int(0, kSecondsPerDay - 2);
            const int64_t camp =
                channel_campaigns[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int64_t>(channel_campaigns.size()) - 1))];
            if (ch.external) {
                RawTouch imp;
                imp.tp = Touchpoint{ch.name, "IMPRESSION", ts, camp,
                                    gen.campaign_embedding(camp), false, {}};
                imp.hidden = true;
                out.push_back(std::move(imp));
                if (rng.bernoulli(ch.ctr)) {
                    const int64_t click_ts =
                        std::min(ts + rng.uniform_int(1, 3600), day_start + kSecondsPerDay - 1);
                    RawTouch click;
                    click.tp = Touchpoint{ch.name, "CLICK", click_ts, camp,
                                          gen.campaign_embedding(camp), false, {}};
                    out.push_back(std::move(click));
                }
            } else {
                double u = rng.uniform();
                std::string action = ch.action_mix.back().first;
                for (auto& [a, p] : ch.action_mix) {
                    if (u < p) {
                        action = a;
                        break;
                    }
                    u -= p;
                }
                RawTouch t;
                t.tp = Touchpoint{ch.name, action, ts, camp, gen.campaign_embedding(camp),
                                  false, {}};
                out.push_back(std::move(t));
            }
        }
    }
}

void sort_touches(std::vector<RawTouch>& touches) {
    std::sort(touches.begin(), touches.end(), [](const RawTouch& a, const RawTouch& b) {
        return std::tie(a.tp.ts, a.tp.channel, a.tp.action, a.tp.campaign_id) <
               std::tie(b.tp.ts, b.tp.channel, b.tp.action, b.tp.campaign_id);
    });
}

}  // namespace

Dataset Generator::generate_dataset() const {
    Dataset ds;
    const int64_t anchor = static_cast<int64_t>(cfg_.horizon_days) * kSecondsPerDay;
    std::map<std::string, double> channel_credit;
    std::set<int64_t> clicker_members;
    struct OwnedCount {
        int64_t imp = 0, clk = 0;
    };
    std::map<int64_t, OwnedCount> owned_by_member;

    for (int i = 0; i < cfg_.n_members; ++i) {
        Rng member_rng(derive_seed(cfg_.seed, "member", static_cast<uint64_t>(i)));
        Path p;
        p.path_id = i;
        p.member_id = i;
        p.member_emb = draw_vector(member_rng, cfg_.d_member,
                                   1.0 / std::sqrt(static_cast<double>(cfg_.d_member)));
        p.company_emb = draw_vector(member_rng, cfg_.d_company,
                                    1.0 / std::sqrt(static_cast<double>(cfg_.d_company)));
        p.anchor_time = anchor;

        std::vector<RawTouch> touches;
        for (const auto& ch : cfg_.channels) {
            Rng touch_rng(derive_seed(cfg_.seed, "touch." + ch.name, static_cast<uint64_t>(i)));
            auto it = campaigns_by_channel_.find(ch.name);
            if (it == campaigns_by_channel_.end() || ch.rate <= 0) continue;
            gen_channel_touches(ch, touch_rng, cfg_.horizon_days, it->second, *this,
                                touches);
        }
        sort_touches(touches);

        // conversion uses the full (pre-strip) logit
        double logit = cfg_.base_logit + entity_logit(p.member_emb, p.company_emb);
        for (const auto& rt : touches) logit += touch_contrib(rt.tp, anchor);
        const double prob = sigmoid(logit);
        Rng conv_rng(derive_seed(cfg_.seed, "conversion", static_cast<uint64_t>(i)));
        p.converted = conv_rng.bernoulli(prob);

        // split observed vs hidden, accumulate aggregates
        std::vector<double> observed_contribs;
        for (const auto& rt : touches) {
            const int64_t day = day_of(rt.tp.ts);
            if (rt.hidden) {
                ds.aggregates.cells[{rt.tp.channel, day}].i_ext += 1;
            } else {
                if (rt.tp.action == "CLICK") {
                    bool external = false;
                    for (const auto& ch : cfg_.channels)
                        if (ch.name == rt.tp.channel) external = ch.external;
                    if (external) ds.aggregates.cells[{rt.tp.channel, day}].c_ext += 1;
                }
                observed_contribs.push_back(touch_contrib(rt.tp, anchor));
                p.touchpoints.push_back(rt.tp);
            }
            bool external = false;
            for (const auto& ch : cfg_.channels)
                if (ch.name == rt.tp.channel) external = ch.external;
            if (!external) {
                if (rt.tp.action == "IMPRESSION") owned_by_member[i].imp += 1;
                if (rt.tp.action == "CLICK") {
                    owned_by_member[i].clk += 1;
                    clicker_members.insert(i);
                }
            }
        }

        if (!p.converted && cfg_.negative_keep < 1.0) {
            Rng keep_rng(derive_seed(cfg_.seed, "negkeep", static_cast<uint64_t>(i)));
            if (!keep_rng.bernoulli(cfg_.negative_keep)) continue;
        }

        if (p.converted && !p.touchpoints.empty()) {
            // removal counterfactual on the full true logit
            const double p_full = prob;
            std::vector<double> deltas(p.touchpoints.size());
            double total = 0.0;
            for (size_t j = 0; j < p.touchpoints.size(); ++j) {
                deltas[j] = std::max(0.0, p_full - sigmoid(logit - observed_contribs[j]));
                total += deltas[j];
            }
            if (total > 0.0)
                for (double& d : deltas) d /= total;
            for (size_t j = 0; j < deltas.size(); ++j)
                channel_credit[p.touchpoints[j].channel] += deltas[j];
            ds.ground_truth.credits[p.path_id] = std::move(deltas);
        }
        ds.paths.push_back(std::move(p));
    }

    for (auto& [member, oc] : owned_by_member) {
        ds.aggregates.i_own_total += oc.imp;
        ds.aggregates.c_own_total += oc.clk;
        if (clicker_members.count(member)) {
            ds.aggregates.i_own_clickers += oc.imp;
            ds.aggregates.c_own_clickers += oc.clk;
        }
    }

    double total_credit = 0.0;
    for (auto& [ch, cr] : channel_credit) total_credit += cr;
    if (total_credit > 0.0)
        for (auto& [ch, cr] : channel_credit)
            ds.ground_truth.channel_share[ch] = cr / total_credit;
    return ds;
}

Experiment Generator::generate_experiment(
    const std::vector<int64_t>& holdout_campaigns) const {
    if (holdout_campaigns.empty()) fail("experiment: holdout set must be non-empty");
    std::set<int64_t> holdout(holdout_campaigns.begin(), holdout_campaigns.end());
    for (int64_t c : holdout)
        if (c < 0 || c >= static_cast<int64_t>(campaigns_.size()))
            fail("experiment: holdout campaign " + std::to_string(c) + " not in config");

    Experiment exp;
    exp.holdout_campaigns.assign(holdout.begin(), holdout.end());
    const int64_t anchor = static_cast<int64_t>(cfg_.horizon_days) * kSecondsPerDay;
    double sum_p_full = 0.0, sum_p_cf = 0.0;

    for (int i = 0; i < cfg_.n_members; ++i) {
        Rng member_rng(derive_seed(cfg_.seed, "member", static_cast<uint64_t>(i)));
        ExperimentRecord rec;
        rec.member_id = i;
        rec.member_emb = draw_vector(member_rng, cfg_.d_member,
                                     1.0 / std::sqrt(static_cast<double>(cfg_.d_member)));
        std::vector<double> company_emb = draw_vector(
            member_rng, cfg_.d_company, 1.0 / std::sqrt(static_cast<double>(cfg_.d_company)));

        double conf_logit = 0.0;
        for (size_t k = 0; k < rec.member_emb.size(); ++k)
            conf_logit += cfg_.confounding * w_member_[k] * rec.member_emb[k];
        rec.e_true = sigmoid(conf_logit);
        Rng assign_rng(derive_seed(cfg_.seed, "assignment", static_cast<uint64_t>(i)));
        rec.z = assign_rng.bernoulli(rec.e_true) ? 1 : 0;

        std::vector<RawTouch> touches;
        for (const auto& ch : cfg_.channels) {
            Rng touch_rng(derive_seed(cfg_.seed, "touch." + ch.name, static_cast<uint64_t>(i)));
            auto it = campaigns_by_channel_.find(ch.name);
            if (it == campaigns_by_channel_.end() || ch.rate <= 0) continue;
            gen_channel_touches(ch, touch_rng, cfg_.horizon_days, it->second, *this,
                                touches);
        }
        sort_touches(touches);

        const double entity = cfg_.base_logit + entity_logit(rec.member_emb, company_emb);
        double logit_full = entity, logit_cf = entity;
        for (const auto& rt : touches) {
            const double c = touch_contrib(rt.tp, anchor);
            logit_full += c;
            if (!holdout.count(rt.tp.campaign_id)) logit_cf += c;
        }
        rec.p_full = sigmoid(logit_full);
        rec.p_cf = sigmoid(logit_cf);
        if (rec.z == 1) {
            sum_p_full += rec.p_full;
            sum_p_cf += rec.p_cf;
        }

        Path p;
        p.path_id = i;
        p.member_id = i;
        p.member_emb = rec.member_emb;
        p.company_emb = std::move(company_emb);
        p.anchor_time = anchor;
        for (const auto& rt : touches) {
            if (rt.hidden) continue;  // external impressions stay aggregate-only
            if (rec.z == 0 && holdout.count(rt.tp.campaign_id)) continue;
            p.touchpoints.push_back(rt.tp);
        }
        const double prob = rec.z == 1 ? rec.p_full : sigmoid(logit_cf);
        Rng conv_rng(derive_seed(cfg_.seed, "conversion", static_cast<uint64_t>(i)));
        rec.y = conv_rng.bernoulli(prob) ? 1 : 0;
        p.converted = rec.y == 1;

        exp.records.push_back(std::move(rec));
        exp.paths.push_back(std::move(p));
    }
    if (sum_p_full <= 0.0) fail("experiment: treated conversion mass is zero");
    exp.true_attribution = (sum_p_full - sum_p_cf) / sum_p_full;
    return exp;
}

void write_ground_truth(const GroundTruth& gt, const std::string& jsonl_file,
                        const std::string& shares_csv) {
    std::ostringstream ss;
    for (const auto& [pid, credits] : gt.credits) {
        json j{{"path_id", pid}, {"credits", credits}};
        ss << j.dump() << "\n";
    }
    write_text_file(jsonl_file, ss.str());
    std::ostringstream cs;
    cs << "key,share\n";
    for (const auto& [ch, share] : gt.channel_share)
        cs << ch << "," << format_double(share) << "\n";
    write_text_file(shares_csv, cs.str());
}

GroundTruth read_ground_truth(const std::string& jsonl_file, const std::string& shares_csv) {
    GroundTruth gt;
    std::istringstream in(read_text_file(jsonl_file));
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        gt.credits[j.at("path_id").get<int64_t>()] =
            j.at("credits").get<std::vector<double>>();
    }
    std::istringstream cs(read_text_file(shares_csv));
    std::getline(cs, line);  // header
    while (std::getline(cs, line)) {
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        gt.channel_share[trim(parts[0])] = std::stod(parts[1]);
    }
    return gt;
}

void write_experiment(const Experiment& exp, const std::string& records_file,
                      const std::string& meta_file) {
    std::ostringstream ss;
    for (const auto& r : exp.records) {
        json j{{"member_id", r.member_id}, {"z", r.z},           {"y", r.y},
               {"member_emb", r.member_emb}, {"e_true", r.e_true}, {"p_full", r.p_full},
               {"p_cf", r.p_cf}};
        ss << j.dump() << "\n";
    }
    write_text_file(records_file, ss.str());
    json meta{{"holdout_campaigns", exp.holdout_campaigns},
              {"true_attribution", exp.true_attribution}};
    write_text_file(meta_file, meta.dump(2) + "\n");
}

Experiment read_experiment(const std::string& records_file, const std::string& meta_file,
                           const std::vector<Path>& paths) {
    Experiment exp;
    std::istringstream in(read_text_file(records_file));
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        ExperimentRecord r;
        r.member_id = j.at("member_id").get<int64_t>();
        r.z = j.at("z").get<int>();
        r.y = j.at("y").get<int>();
        r.member_emb = j.at("member_emb").get<std::vector<double>>();
        r.e_true = j.at("e_true").get<double>();
        r.p_full = j.at("p_full").get<double>();
        r.p_cf = j.at("p_cf").get<double>();
        exp.records.push_back(std::move(r));
    }
    json meta = json::parse(read_text_file(meta_file));
    exp.holdout_campaigns = meta.at("holdout_campaigns").get<std::vector<int64_t>>();
    exp.true_attribution = meta.at("true_attribution").get<double>();
    exp.paths = paths;
    return exp;
}

}  // namespace lidda

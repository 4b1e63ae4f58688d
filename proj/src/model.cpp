// SPDX-License-Identifier: Apache-2.0
#include "lidda/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lidda/metrics.h"

namespace lidda {

using nlohmann::json;

std::string calibration_name(Calibration c) {
    switch (c) {
        case Calibration::none: return "none";
        case Calibration::batch_mse: return "batch_mse";
        case Calibration::batch_kl: return "batch_kl";
        case Calibration::path_mse: return "path_mse";
        case Calibration::path_kl: return "path_kl";
    }
    fail("calibration_name: bad enum");
}

Calibration calibration_from_name(const std::string& name) {
    if (name == "none") return Calibration::none;
    if (name == "batch_mse") return Calibration::batch_mse;
    if (name == "batch_kl") return Calibration::batch_kl;
    if (name == "path_mse") return Calibration::path_mse;
    if (name == "path_kl") return Calibration::path_kl;
    fail("unknown calibration mode: " + name);
}

ModelConfig ModelConfig::from_config(const Config& cfg) {
    ModelConfig m;
    m.n_max = static_cast<int>(cfg.get_int("n_max", 16));
    m.d_t = static_cast<int>(cfg.get_int("d_t", 8));
    m.d_mcid = static_cast<int>(cfg.get_int("d_mcid", 8));
    m.heads = static_cast<int>(cfg.get_int("heads", 2));
    m.d_max_gap = static_cast<int>(cfg.get_int("d_max_gap", 90));
    m.d_member = static_cast<int>(cfg.get_int("d_member", 4));
    m.d_company = static_cast<int>(cfg.get_int("d_company", 4));
    m.hidden = static_cast<int>(cfg.get_int("hidden", 0));
    m.beta = cfg.get_double("beta", 0.0);
    m.calibration = calibration_from_name(cfg.get_str("calibration", "none"));
    m.lr = cfg.get_double("lr", 1e-3);
    m.epochs = static_cast<int>(cfg.get_int("epochs", 5));
    m.batch_size = static_cast<int>(cfg.get_int("batch_size", 256));
    m.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    m.holdout_frac = cfg.get_double("holdout_frac", 0.1);
    m.use_entity = cfg.get_bool("use_entity", true);
    m.use_campaign = cfg.get_bool("use_campaign", true);
    m.use_dates = cfg.get_bool("use_dates", true);
    m.d_advertiser = static_cast<int>(cfg.get_int("d_advertiser", 0));
    m.validate();
    return m;
}

void ModelConfig::validate() const {
    if (n_max < 1) fail("model config: n_max >= 1 required");
    if (d_t < 1 || d_mcid < 0) fail("model config: bad embedding dims");
    if (d_model() % 2 != 0) fail("model config: d_model must be even (tAPE pairs)");
    if (heads < 1 || d_model() % heads != 0)
        fail("model config: d_model must be divisible by heads");
    if (d_max_gap < 1) fail("model config: d_max_gap >= 1 required");
    if (epochs < 1 || batch_size < 1) fail("model config: bad training params");
    if (holdout_frac < 0.0 || holdout_frac >= 1.0)
        fail("model config: holdout_frac outside [0, 1)");
}

ModelConfig ModelConfig::variant(const std::string& name) const {
    ModelConfig v = *this;
    if (name == "Baseline") return v;
    if (name == "No-Entity") {
        v.use_entity = false;
        return v;
    }
    if (name == "No-Campaign") {
        v.use_campaign = false;
        return v;
    }
    if (name == "No-Date") {
        v.use_dates = false;
        return v;
    }
    if (name == "Seq-Only") {
        v.use_entity = false;
        v.use_campaign = false;
        v.use_dates = false;
        return v;
    }
    fail("unknown ablation variant: " + name);
}

void MmmTargets::validate() const {
    if (channels.size() != a.size() || channels.size() != pi.size())
        fail("mmm targets: misaligned columns");
    double sa = 0, sp = 0;
    for (size_t i = 0; i < channels.size(); ++i) {
        if (a[i] < 0 || pi[i] < 0) fail("mmm targets: negative share");
        sa += a[i];
        sp += pi[i];
    }
    if (std::abs(sa - 1.0) > 1e-6) fail("mmm targets: a_mmm must sum to 1");
    if (std::abs(sp - 1.0) > 1e-6) fail("mmm targets: pi_mmm must sum to 1");
}

MmmTargets MmmTargets::read_csv(const std::string& file) {
    MmmTargets t;
    std::istringstream in(read_text_file(file));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "channel,a_mmm,pi_mmm")
        fail("mmm targets: bad header in " + file);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        if (parts.size() != 3) fail("mmm targets: expected 3 columns");
        t.channels.push_back(trim(parts[0]));
        t.a.push_back(std::stod(parts[1]));
        t.pi.push_back(std::stod(parts[2]));
    }
    t.validate();
    return t;
}

void MmmTargets::write_csv(const std::string& file) const {
    validate();
    std::ostringstream ss;
    ss << "channel,a_mmm,pi_mmm\n";
    for (size_t i = 0; i < channels.size(); ++i)
        ss << channels[i] << "," << format_double(a[i]) << "," << format_double(pi[i]) << "\n";
    write_text_file(file, ss.str());
}

int MmmTargets::channel_index(const std::string& channel) const {
    for (size_t i = 0; i < channels.size(); ++i)
        if (channels[i] == channel) return static_cast<int>(i);
    return -1;
}

Tensor tape_encoding(int n, int d_model, int length) {
    if (d_model % 2 != 0) fail("tape_encoding: d_model must be even");
    if (length < 1) fail("tape_encoding: L >= 1 required");
    Tensor pe({n, d_model});
    for (int k = 0; k < d_model / 2; ++k) {
        const double omega = std::pow(10000.0, -2.0 * k / static_cast<double>(d_model));
        const double omega_new = omega * static_cast<double>(d_model) / length;
        for (int pos = 0; pos < n; ++pos) {
            pe.at(pos, 2 * k) = std::sin(pos * omega_new);
            pe.at(pos, 2 * k + 1) = std::cos(pos * omega_new);
        }
    }
    return pe;
}

int day_gap_bucket(int64_t anchor_time, int64_t ts, int d_max_gap) {
    int64_t gap = (anchor_time - ts) / kSecondsPerDay;
    if (gap < 0) gap = 0;
    if (gap > d_max_gap - 1) gap = d_max_gap - 1;
    return static_cast<int>(gap);
}

std::vector<double> path_mmm_target(const std::vector<double>& pi_path,
                                    const MmmTargets& targets, int* excluded) {
    if (pi_path.size() != targets.channels.size())
        fail("path_mmm_target: channel count mismatch");
    std::vector<double> t(pi_path.size(), 0.0);
    int dropped = 0;
    double total = 0.0;
    for (size_t c = 0; c < pi_path.size(); ++c) {
        if (pi_path[c] <= 0.0) continue;
        if (targets.pi[c] <= 0.0) {
            ++dropped;  // channel present in the path but impossible under pi_mmm
            continue;
        }
        t[c] = pi_path[c] / targets.pi[c] * targets.a[c];
        total += t[c];
    }
    if (excluded) *excluded = dropped;
    if (total > 0.0)
        for (double& x : t) x /= total;
    return t;
}

void write_train_log(const TrainLog& log, const std::string& file) {
    std::ostringstream ss;
    ss << "epoch,train_bce,train_calib,holdout_auc\n";
    for (const auto& e : log.epochs)
        ss << e.epoch << "," << format_double(e.bce) << "," << format_double(e.calib) << ","
           << format_double(e.holdout_auc) << "\n";
    write_text_file(file, ss.str());
}

AttributionModel::AttributionModel(ModelConfig cfg, Vocab vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.validate();
    tape_enc_ = tape_encoding(cfg_.n_max, cfg_.d_model(), cfg_.n_max);
    init_params();
}

void AttributionModel::init_params() {
    Rng rng(derive_seed(cfg_.seed, "init"));
    auto xavier = [&](const std::string& name, int fan_in, int fan_out) {
        Tensor t({fan_in, fan_out});
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& x : t.v) x = rng.uniform(-limit, limit);
        params_.push_back({name, std::move(t), Tensor({fan_in, fan_out}), {}});
    };
    auto table = [&](const std::string& name, int rows, int cols) {
        Tensor t({rows, cols});
        for (double& x : t.v) x = rng.normal(0.0, 0.02);
        params_.push_back({name, std::move(t), Tensor({rows, cols}), {}});
    };
    auto zeros = [&](const std::string& name, int rows, int cols) {
        params_.push_back({name, Tensor({rows, cols}), Tensor({rows, cols}), {}});
    };

    table("kind_emb", vocab_.size() + 1, cfg_.d_t);
    table("gap_emb", cfg_.d_max_gap, cfg_.d_model());
    table("dow_emb", 7, cfg_.d_model());
    for (int h = 0; h < cfg_.heads; ++h) {
        xavier("wq." + std::to_string(h), cfg_.d_model(), cfg_.d_k());
        xavier("wk." + std::to_string(h), cfg_.d_model(), cfg_.d_k());
        xavier("wv." + std::to_string(h), cfg_.d_model(), cfg_.d_model());
    }
    xavier("w1", cfg_.head_input_dim(), cfg_.hidden_dim());
    zeros("b1", 1, cfg_.hidden_dim());
    xavier("w2", cfg_.hidden_dim(), 1);
    zeros("b2", 1, 1);
}

AttributionModel::Parameter& AttributionModel::find_param(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    fail("model: unknown parameter " + name);
}

const AttributionModel::Parameter& AttributionModel::find_param(
    const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    fail("model: unknown parameter " + name);
}

Tensor& AttributionModel::param(const std::string& name) { return find_param(name).value; }
const Tensor& AttributionModel::param(const std::string& name) const {
    return find_param(name).value;
}

std::vector<std::string> AttributionModel::param_names() const {
    std::vector<std::string> names;
    for (const auto& p : params_) names.push_back(p.name);
    return names;
}

AttributionModel::LeafIds AttributionModel::make_leaves(Tape& tape) {
    LeafIds ids;
    auto leaf_of = [&](const std::string& name) {
        Parameter& p = find_param(name);
        return tape.leaf(p.value, &p.grad);
    };
    ids.kind_emb = leaf_of("kind_emb");
    if (cfg_.use_dates) {
        ids.gap_emb = leaf_of("gap_emb");
        ids.dow_emb = leaf_of("dow_emb");
    }
    for (int h = 0; h < cfg_.heads; ++h) {
        ids.wq.push_back(leaf_of("wq." + std::to_string(h)));
        ids.wk.push_back(leaf_of("wk." + std::to_string(h)));
        ids.wv.push_back(leaf_of("wv." + std::to_string(h)));
    }
    ids.w1 = leaf_of("w1");
    ids.b1 = leaf_of("b1");
    ids.w2 = leaf_of("w2");
    ids.b2 = leaf_of("b2");
    return ids;
}

AttributionModel::Assembled AttributionModel::assemble_inputs(Tape& tape,
                                                              const LeafIds& leaves,
                                                              const Path& path) {
    const int n = cfg_.n_max;
    const int len = std::min(path.length(), n);
    if (path.length() > n)
        fail("model: path " + std::to_string(path.path_id) + " longer than n_max (" +
             std::to_string(path.length()) + " > " + std::to_string(n) + "), preprocess first");

    std::vector<int> kinds(static_cast<size_t>(n), 0);
    std::vector<int> gaps(static_cast<size_t>(n), 0);
    std::vector<int> dows(static_cast<size_t>(n), 0);
    Tensor camp({n, cfg_.d_mcid});
    Tensor keep({1, n});
    Tensor key_mask({1, n});
    for (int j = 0; j < n; ++j) {
        if (j < len) {
            const Touchpoint& t = path.touchpoints[static_cast<size_t>(j)];
            kinds[static_cast<size_t>(j)] = vocab_.index_of(t.channel, t.action);
            gaps[static_cast<size_t>(j)] =
                day_gap_bucket(path.anchor_time, t.ts, cfg_.d_max_gap);
            dows[static_cast<size_t>(j)] = day_of_week(t.ts);
            if (cfg_.use_campaign) {
                if (static_cast<int>(t.campaign_emb.size()) != cfg_.d_mcid)
                    fail("model: campaign embedding length " +
                         std::to_string(t.campaign_emb.size()) + " != d_mcid " +
                         std::to_string(cfg_.d_mcid) + " on path " +
                         std::to_string(path.path_id));
                for (int c = 0; c < cfg_.d_mcid; ++c) camp.at(j, c) = t.campaign_emb[c];
            }
            keep.v[static_cast<size_t>(j)] = 1.0;
            key_mask.v[static_cast<size_t>(j)] = 0.0;
        } else {
            keep.v[static_cast<size_t>(j)] = 0.0;
            key_mask.v[static_cast<size_t>(j)] = -1e9;
        }
    }

    const int et = tape.gather_rows(leaves.kind_emb, kinds);
    int x = tape.concat(tape.constant(std::move(camp)), et);
    if (cfg_.use_dates) {
        const int ed = tape.gather_rows(leaves.gap_emb, gaps);
        const int edow = tape.gather_rows(leaves.dow_emb, dows);
        x = tape.add_n({x, ed, edow});
    }
    x = tape.add(x, tape.constant(tape_enc_));
    const int keep_node = tape.constant(keep);
    x = tape.mask_rows(x, keep_node);

    Assembled out;
    out.inputs = x;
    out.key_mask = tape.constant(std::move(key_mask));
    out.keep_rows = keep_node;
    out.len = len;
    return out;
}

AttributionModel::ForwardRefs AttributionModel::build_forward(
    Tape& tape, const Path& path, const std::vector<std::string>* channels,
    Rng* permute_rng) {
    return forward_with_leaves(tape, make_leaves(tape), path, channels, permute_rng);
}

AttributionModel::ForwardRefs AttributionModel::forward_with_leaves(
    Tape& tape, const LeafIds& leaves, const Path& path,
    const std::vector<std::string>* channels, Rng* permute_rng) {
    const int n = cfg_.n_max;
    Assembled asmb = assemble_inputs(tape, leaves, path);

    std::vector<int> perm;
    if (permute_rng && asmb.len > 1) {
        perm.resize(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<int> head(perm.begin(), perm.begin() + asmb.len);
        permute_rng->shuffle(head);
        std::copy(head.begin(), head.end(), perm.begin());
    }

    std::vector<int> heads_out;
    ForwardRefs refs;
    refs.path_len = asmb.len;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k()));
    for (int h = 0; h < cfg_.heads; ++h) {
        const int q = tape.matmul(asmb.inputs, leaves.wq[static_cast<size_t>(h)]);
        const int k = tape.matmul(asmb.inputs, leaves.wk[static_cast<size_t>(h)]);
        const int scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_dk);
        int attn = tape.softmax_masked(scores, asmb.key_mask);
        if (!perm.empty()) attn = tape.permute_cols(attn, perm);
        refs.attn.push_back(attn);
        const int v = tape.matmul(asmb.inputs, leaves.wv[static_cast<size_t>(h)]);
        heads_out.push_back(tape.matmul(attn, v));
    }
    int es = tape.scale(tape.add_n(heads_out), 1.0 / cfg_.heads);
    es = tape.mask_rows(es, asmb.keep_rows);  // padded query rows carry no signal

    int z = tape.reshape(es, {1, n * cfg_.d_model()});
    if (cfg_.use_entity) {
        Tensor member({1, cfg_.d_member});
        Tensor company({1, cfg_.d_company});
        for (int i = 0; i < cfg_.d_member && i < static_cast<int>(path.member_emb.size()); ++i)
            member.v[static_cast<size_t>(i)] = path.member_emb[static_cast<size_t>(i)];
        for (int i = 0; i < cfg_.d_company && i < static_cast<int>(path.company_emb.size());
             ++i)
            company.v[static_cast<size_t>(i)] = path.company_emb[static_cast<size_t>(i)];
        z = tape.concat(z, tape.constant(std::move(member)));
        z = tape.concat(z, tape.constant(std::move(company)));
    }
    if (cfg_.d_advertiser > 0)
        z = tape.concat(z, tape.constant(Tensor({1, cfg_.d_advertiser})));

    const int h1 = tape.relu(tape.add_bias(tape.matmul(z, leaves.w1), leaves.b1));
    const int logit = tape.add_bias(tape.matmul(h1, leaves.w2), leaves.b2);
    refs.prob = tape.sigmoid(logit);

    if (asmb.len > 0) {
        // key-column mass summed over heads and unmasked queries, normalized
        int colmass = -1;
        const int ones = asmb.keep_rows;  // [1, n], 1 at real queries
        for (int h = 0; h < cfg_.heads; ++h) {
            const int cm = tape.matmul(ones, refs.attn[static_cast<size_t>(h)]);
            colmass = colmass < 0 ? cm : tape.add(colmass, cm);
        }
        colmass = tape.mul(colmass, asmb.keep_rows);  // exact zeros at padding
        refs.credits = tape.l1_normalize(colmass);

        if (channels) {
            Tensor indicator({n, static_cast<int>(channels->size())});
            for (int j = 0; j < asmb.len; ++j) {
                const std::string& ch = path.touchpoints[static_cast<size_t>(j)].channel;
                for (size_t c = 0; c < channels->size(); ++c)
                    if ((*channels)[c] == ch) indicator.at(j, static_cast<int>(c)) = 1.0;
            }
            refs.shares = tape.matmul(refs.credits, tape.constant(std::move(indicator)));
        }
    }
    return refs;
}

double AttributionModel::predict(const Path& path) {
    Tape tape;
    return tape.value(build_forward(tape, path).prob).item();
}

std::vector<double> AttributionModel::predict_all(const std::vector<Path>& paths,
                                                  Rng* permute_rng) {
    std::vector<double> out;
    out.reserve(paths.size());
    Tape tape;
    for (const Path& p : paths) {
        tape.reset();
        out.push_back(tape.value(build_forward(tape, p, nullptr, permute_rng).prob).item());
    }
    return out;
}

std::vector<Tensor> AttributionModel::attention_of(const Path& path) {
    Tape tape;
    ForwardRefs refs = build_forward(tape, path);
    std::vector<Tensor> out;
    for (int id : refs.attn) out.push_back(tape.value(id));
    return out;
}

std::vector<double> AttributionModel::attention_credits_of(const Path& path) {
    if (path.length() == 0) return {};
    Tape tape;
    ForwardRefs refs = build_forward(tape, path);
    const Tensor& c = tape.value(refs.credits);
    return std::vector<double>(c.v.begin(), c.v.begin() + path.length());
}

std::vector<double> AttributionModel::batch_channel_mix(
    const std::vector<Path>& paths, const std::vector<std::string>& channels) {
    std::vector<double> mix(channels.size(), 0.0);
    int counted = 0;
    Tape tape;
    for (const Path& p : paths) {
        if (p.length() == 0) continue;
        tape.reset();
        ForwardRefs refs = build_forward(tape, p, &channels);
        const Tensor& s = tape.value(refs.shares);
        for (size_t c = 0; c < channels.size(); ++c) mix[c] += s.v[c];
        ++counted;
    }
    if (counted > 0)
        for (double& m : mix) m /= counted;
    return mix;
}

TrainLog AttributionModel::train(const std::vector<Path>& paths,
                                 const std::vector<int>& labels, const MmmTargets* targets) {
    if (paths.empty()) fail("train: empty dataset");
    if (paths.size() != labels.size()) fail("train: labels misaligned");
    bool has_pos = false, has_neg = false;
    for (int y : labels) (y ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) fail("train: need both converting and non-converting paths");
    const bool calibrate =
        targets && cfg_.calibration != Calibration::none && cfg_.beta != 0.0;
    if (calibrate) targets->validate();

    TrainLog log;

    // stratified holdout split
    std::vector<size_t> pos_idx, neg_idx;
    for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos_idx : neg_idx).push_back(i);
    Rng split_rng(derive_seed(cfg_.seed, "train.split"));
    split_rng.shuffle(pos_idx);
    split_rng.shuffle(neg_idx);
    std::vector<size_t> train_idx, holdout_idx;
    const size_t pos_hold = static_cast<size_t>(
        std::floor(static_cast<double>(pos_idx.size()) * cfg_.holdout_frac));
    const size_t neg_hold = static_cast<size_t>(
        std::floor(static_cast<double>(neg_idx.size()) * cfg_.holdout_frac));
    for (size_t i = 0; i < pos_idx.size(); ++i)
        (i < pos_hold ? holdout_idx : train_idx).push_back(pos_idx[i]);
    for (size_t i = 0; i < neg_idx.size(); ++i)
        (i < neg_hold ? holdout_idx : train_idx).push_back(neg_idx[i]);
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(holdout_idx.begin(), holdout_idx.end());

    // path-level channel fractions for calibration targets
    std::vector<std::vector<double>> path_targets;
    int excluded_total = 0;
    if (calibrate && (cfg_.calibration == Calibration::path_mse ||
                      cfg_.calibration == Calibration::path_kl)) {
        path_targets.resize(paths.size());
        for (size_t i = 0; i < paths.size(); ++i) {
            const Path& p = paths[i];
            if (p.length() == 0) continue;
            std::vector<double> pi(targets->channels.size(), 0.0);
            for (const Touchpoint& t : p.touchpoints) {
                const int c = targets->channel_index(t.channel);
                if (c >= 0) pi[static_cast<size_t>(c)] += 1.0 / p.length();
            }
            int excluded = 0;
            path_targets[i] = path_mmm_target(pi, *targets, &excluded);
            excluded_total += excluded;
        }
        if (excluded_total > 0)
            log.warnings.push_back(
                "calibration: " + std::to_string(excluded_total) +
                " path-channel entries had pi_mmm = 0 and were excluded from targets");
    }

    Tape tape;
    Rng shuffle_rng(derive_seed(cfg_.seed, "train.shuffle"));
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        std::vector<size_t> order = train_idx;
        shuffle_rng.shuffle(order);
        double epoch_bce = 0.0, epoch_calib = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg_.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size));
            tape.reset();
            for (auto& p : params_) p.grad.fill(0.0);
            const LeafIds leaves = make_leaves(tape);

            std::vector<int> bces;
            std::vector<int> share_nodes;
            std::vector<size_t> share_paths;
            for (size_t bi = start; bi < end; ++bi) {
                const size_t i = order[bi];
                ForwardRefs refs = forward_with_leaves(
                    tape, leaves, paths[i], calibrate ? &targets->channels : nullptr,
                    nullptr);
                const int label = tape.constant(
                    Tensor::scalar(static_cast<double>(labels[i])));
                bces.push_back(tape.bce(refs.prob, label));
                if (calibrate && refs.shares >= 0) {
                    share_nodes.push_back(refs.shares);
                    share_paths.push_back(i);
                }
            }
            const int bce_mean = tape.scale(tape.add_n(bces),
                                            1.0 / static_cast<double>(bces.size()));
            int loss = bce_mean;
            int calib_node = -1;
            if (calibrate && !share_nodes.empty()) {
                const size_t ne = share_nodes.size();
                const int c_count = static_cast<int>(targets->channels.size());
                switch (cfg_.calibration) {
                    case Calibration::batch_mse: {
                        const int a_mix = tape.scale(tape.add_n(share_nodes),
                                                     1.0 / static_cast<double>(ne));
                        const int diff = tape.sub(
                            a_mix, tape.constant(Tensor({1, c_count}, targets->a)));
                        calib_node = tape.sum(tape.mul(diff, diff));
                        break;
                    }
                    case Calibration::batch_kl: {
                        const int a_mix = tape.scale(tape.add_n(share_nodes),
                                                     1.0 / static_cast<double>(ne));
                        double const_term = 0.0;
                        for (double ac : targets->a)
                            if (ac > 0) const_term += ac * std::log(ac);
                        const int cross =
                            tape.sum(tape.mul(tape.constant(Tensor({1, c_count}, targets->a)),
                                              tape.log_clamped(a_mix)));
                        calib_node = tape.add(tape.constant(Tensor::scalar(const_term)),
                                              tape.scale(cross, -1.0));
                        break;
                    }
                    case Calibration::path_mse: {
                        std::vector<int> per_path;
                        for (size_t s = 0; s < ne; ++s) {
                            const int diff = tape.sub(
                                share_nodes[s],
                                tape.constant(Tensor({1, c_count},
                                                     path_targets[share_paths[s]])));
                            per_path.push_back(tape.sum(tape.mul(diff, diff)));
                        }
                        calib_node = tape.scale(tape.add_n(per_path),
                                                1.0 / static_cast<double>(ne));
                        break;
                    }
                    case Calibration::path_kl: {
                        std::vector<int> per_path;
                        for (size_t s = 0; s < ne; ++s) {
                            const std::vector<double>& t = path_targets[share_paths[s]];
                            double const_term = 0.0;
                            for (double tc : t)
                                if (tc > 0) const_term += tc * std::log(tc);
                            const int cross = tape.sum(
                                tape.mul(tape.constant(Tensor({1, c_count}, t)),
                                         tape.log_clamped(share_nodes[s])));
                            per_path.push_back(
                                tape.add(tape.constant(Tensor::scalar(const_term)),
                                         tape.scale(cross, -1.0)));
                        }
                        calib_node = tape.scale(tape.add_n(per_path),
                                                1.0 / static_cast<double>(ne));
                        break;
                    }
                    case Calibration::none:
                        break;
                }
                if (calib_node >= 0) loss = tape.add(loss, tape.scale(calib_node, cfg_.beta));
            }

            const double loss_value = tape.value(loss).item();
            if (!std::isfinite(loss_value))
                fail("train: divergence (non-finite loss) at epoch " + std::to_string(epoch) +
                     ", batch " + std::to_string(batches));
            epoch_bce += tape.value(bce_mean).item();
            if (calib_node >= 0) epoch_calib += tape.value(calib_node).item();
            tape.backward(loss);
            for (auto& p : params_) adam_step(p.value, p.grad, cfg_.lr, p.adam);
            ++batches;
        }

        TrainEpoch te;
        te.epoch = epoch;
        te.bce = batches > 0 ? epoch_bce / batches : 0.0;
        te.calib = batches > 0 ? epoch_calib / batches : 0.0;
        if (!holdout_idx.empty()) {
            std::vector<double> scores;
            std::vector<int> ys;
            Tape eval_tape;
            bool both = false, seen_pos = false, seen_neg = false;
            for (size_t i : holdout_idx) {
                eval_tape.reset();
                scores.push_back(
                    eval_tape.value(build_forward(eval_tape, paths[i]).prob).item());
                ys.push_back(labels[i]);
                (labels[i] ? seen_pos : seen_neg) = true;
            }
            both = seen_pos && seen_neg;
            te.holdout_auc = both ? roc_auc(scores, ys) : 0.5;
        } else {
            te.holdout_auc = 0.5;
        }
        log.epochs.push_back(te);
    }
    return log;
}

void AttributionModel::save(const std::string& file) const {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& p : params_) tensors.emplace_back(p.name, p.value);
    save_checkpoint(file, tensors);
    json meta;
    meta["config"] = {{"n_max", cfg_.n_max},
                      {"d_t", cfg_.d_t},
                      {"d_mcid", cfg_.d_mcid},
                      {"heads", cfg_.heads},
                      {"d_max_gap", cfg_.d_max_gap},
                      {"d_member", cfg_.d_member},
                      {"d_company", cfg_.d_company},
                      {"hidden", cfg_.hidden},
                      {"beta", cfg_.beta},
                      {"calibration", calibration_name(cfg_.calibration)},
                      {"lr", cfg_.lr},
                      {"epochs", cfg_.epochs},
                      {"batch_size", cfg_.batch_size},
                      {"seed", cfg_.seed},
                      {"holdout_frac", cfg_.holdout_frac},
                      {"use_entity", cfg_.use_entity},
                      {"use_campaign", cfg_.use_campaign},
                      {"use_dates", cfg_.use_dates},
                      {"d_advertiser", cfg_.d_advertiser}};
    json pairs = json::array();
    for (int i = 1; i <= vocab_.size(); ++i) {
        const TouchpointKind& k = vocab_.kind_at(i);
        pairs.push_back({k.channel, k.action});
    }
    meta["vocab"] = std::move(pairs);
    write_text_file(file + ".meta.json", meta.dump(2) + "\n");
}

AttributionModel AttributionModel::load(const std::string& file) {
    json meta = json::parse(read_text_file(file + ".meta.json"));
    const json& c = meta.at("config");
    ModelConfig cfg;
    cfg.n_max = c.at("n_max").get<int>();
    cfg.d_t = c.at("d_t").get<int>();
    cfg.d_mcid = c.at("d_mcid").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.d_max_gap = c.at("d_max_gap").get<int>();
    cfg.d_member = c.at("d_member").get<int>();
    cfg.d_company = c.at("d_company").get<int>();
    cfg.hidden = c.at("hidden").get<int>();
    cfg.beta = c.at("beta").get<double>();
    cfg.calibration = calibration_from_name(c.at("calibration").get<std::string>());
    cfg.lr = c.at("lr").get<double>();
    cfg.epochs = c.at("epochs").get<int>();
    cfg.batch_size = c.at("batch_size").get<int>();
    cfg.seed = c.at("seed").get<uint64_t>();
    cfg.holdout_frac = c.at("holdout_frac").get<double>();
    cfg.use_entity = c.at("use_entity").get<bool>();
    cfg.use_campaign = c.at("use_campaign").get<bool>();
    cfg.use_dates = c.at("use_dates").get<bool>();
    cfg.d_advertiser = c.at("d_advertiser").get<int>();

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& p : meta.at("vocab"))
        pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());

    AttributionModel model(cfg, Vocab::build(std::move(pairs)));
    for (auto& [name, tensor] : load_checkpoint(file)) {
        Tensor& dst = model.param(name);
        if (!dst.same_shape(tensor))
            fail("model load: shape mismatch for parameter " + name);
        dst = std::move(tensor);
    }
    return model;
}

}  // namespace lidda

// SPDX-License-Identifier: Apache-2.0
//
// The attribution model: per-touch inputs (campaign vector + learned kind
// embedding, plus day-gap, day-of-week and tAPE encodings), one multi-head
// self-attention layer, and a classification head over the flattened
// attention output concatenated with the member/company embeddings. Training
// minimizes BCE plus an optional MMM calibration penalty that pulls the
// model's channel credit mix toward aggregate targets.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lidda/common.h"
#include "lidda/journey.h"
#include "lidda/optim.h"
#include "lidda/tape.h"
#include "lidda/tensor.h"

namespace lidda {

enum class Calibration { none, batch_mse, batch_kl, path_mse, path_kl };

std::string calibration_name(Calibration c);
Calibration calibration_from_name(const std::string& name);

struct ModelConfig {
    int n_max = 16;      // N, max path length
    int d_t = 8;         // kind embedding dim
    int d_mcid = 8;      // campaign vector dim
    int heads = 2;       // H
    int d_max_gap = 90;  // day-gap buckets
    int d_member = 4;
    int d_company = 4;
    int hidden = 0;  // classifier hidden width; 0 means d_model
    double beta = 0.0;
    Calibration calibration = Calibration::none;
    double lr = 1e-3;
    int epochs = 5;
    int batch_size = 256;
    uint64_t seed = 1;
    double holdout_frac = 0.1;
    // ablation switches
    bool use_entity = true;
    bool use_campaign = true;
    bool use_dates = true;
    // optional advertiser-company slot; off by default
    int d_advertiser = 0;

    int d_model() const { return d_t + d_mcid; }
    int d_k() const { return d_model() / heads; }
    int hidden_dim() const { return hidden > 0 ? hidden : d_model(); }
    int head_input_dim() const {
        return n_max * d_model() + (use_entity ? d_member + d_company : 0) + d_advertiser;
    }

    static ModelConfig from_config(const Config& cfg);
    void validate() const;
    ModelConfig variant(const std::string& name) const;  // ablation variants
};

struct MmmTargets {
    std::vector<std::string> channels;
    std::vector<double> a;   // a_c^MMM, sums to 1
    std::vector<double> pi;  // pi_c^MMM, sums to 1

    void validate() const;
    static MmmTargets read_csv(const std::string& file);
    void write_csv(const std::string& file) const;
    int channel_index(const std::string& channel) const;  // -1 if absent
};

// tAPE matrix [n, d_model]: sinusoidal encodings with frequencies
// w_k = 10000^{-2k/d_model} rescaled by d_model/L.
Tensor tape_encoding(int n, int d_model, int length);

int day_gap_bucket(int64_t anchor_time, int64_t ts, int d_max_gap);

// Path-level calibration target (A.3.2): w_c = pi_path_c / pi_mmm_c,
// t = normalize(w * a_mmm). Channels with pi_mmm = 0 but path mass are
// excluded and reported via *excluded.
std::vector<double> path_mmm_target(const std::vector<double>& pi_path,
                                    const MmmTargets& targets, int* excluded = nullptr);

struct TrainEpoch {
    int epoch = 0;
    double bce = 0.0;
    double calib = 0.0;
    double holdout_auc = 0.0;
};

struct TrainLog {
    std::vector<TrainEpoch> epochs;
    std::vector<std::string> warnings;
};

void write_train_log(const TrainLog& log, const std::string& file);

class AttributionModel {
public:
    AttributionModel(ModelConfig cfg, Vocab vocab);

    const ModelConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

    // Node handles into a caller-owned tape for one path.
    struct ForwardRefs {
        int prob = -1;               // [1,1]
        std::vector<int> attn;       // per head [N,N]
        int credits = -1;            // [1,N], -1 for empty paths
        int shares = -1;             // [1,C], -1 unless channels given
        int path_len = 0;
    };

    // channels: rollup channel order for the shares node (nullptr to skip).
    // permute_rng: when set, attention key columns are randomly permuted
    // per path (interpretability test mode). Parameter leaves sink their
    // gradients into this model's grad buffers.
    ForwardRefs build_forward(Tape& tape, const Path& path,
                              const std::vector<std::string>* channels = nullptr,
                              Rng* permute_rng = nullptr);

    double predict(const Path& path);
    std::vector<double> predict_all(const std::vector<Path>& paths,
                                    Rng* permute_rng = nullptr);
    std::vector<Tensor> attention_of(const Path& path);  // per head [N,N]
    std::vector<double> attention_credits_of(const Path& path);

    TrainLog train(const std::vector<Path>& paths, const std::vector<int>& labels,
                   const MmmTargets* targets);

    // channel mix of attention credits over a path set (shares over the given
    // channel order, computed forward-only)
    std::vector<double> batch_channel_mix(const std::vector<Path>& paths,
                                          const std::vector<std::string>& channels);

    void save(const std::string& file) const;
    static AttributionModel load(const std::string& file);

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    std::vector<std::string> param_names() const;

private:
    struct Parameter {
        std::string name;
        Tensor value;
        Tensor grad;
        AdamState adam;
    };

    void init_params();
    Parameter& find_param(const std::string& name);
    const Parameter& find_param(const std::string& name) const;

    // parameter leaves, shared across all paths on one tape
    struct LeafIds {
        int kind_emb = -1, gap_emb = -1, dow_emb = -1;
        std::vector<int> wq, wk, wv;
        int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
    };
    LeafIds make_leaves(Tape& tape);

    // assemble per-touch inputs; returns (inputs node [N, d_model], key mask
    // const [1, N], keep01 const rows [N])
    struct Assembled {
        int inputs = -1;
        int key_mask = -1;
        int keep_rows = -1;
        int len = 0;
    };
    Assembled assemble_inputs(Tape& tape, const LeafIds& leaves, const Path& path);

    ForwardRefs forward_with_leaves(Tape& tape, const LeafIds& leaves, const Path& path,
                                    const std::vector<std::string>* channels,
                                    Rng* permute_rng);

    ModelConfig cfg_;
    Vocab vocab_;
    Tensor tape_enc_;  // precomputed [N, d_model]
    std::vector<Parameter> params_;
};

}  // namespace lidda

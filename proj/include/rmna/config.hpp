#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmna/aggregator.hpp"
#include "rmna/decoder.hpp"
#include "rmna/evaluator.hpp"
#include "rmna/rules.hpp"
#include "rmna/transe.hpp"

namespace rmna {

// Every knob of the pipeline, with defaults matching the FB15K-237 settings.
// Parsed from `key = value` files with '#' comments; unknown keys are
// rejected rather than ignored.
struct PipelineConfig {
    std::string dataset = "toy";
    std::string train_path;
    std::string valid_path;
    std::string test_path;

    bool inverse_relations = true;
    uint64_t seed = 42;
    std::string norm = "l1";

    // rule mining
    int l_max = 3;
    double hc_min = 0.7;
    double conf_min = 0.7;

    // base embedding pretraining
    int dim = 100;
    double pre_lr = 0.001;
    double pre_margin = 1.0;
    int pre_epochs = 1000;
    int pre_batch = 128;
    int pre_n_neg = 1;
    int pre_patience = 50;
    int pre_val_every = 1;

    // neighbor aggregation
    double agg_lr = 0.001;
    double margin = 1.0;
    int k_m = 2;
    int k_s = 4;
    int d1 = 100;
    int d2 = 200;
    int d_q1 = 25;
    int d_q2 = 50;
    int d_k1 = 25;
    int d_k2 = 50;
    int d_v1 = 25;
    int d_v2 = 50;
    double dropout = 0.3;
    int agg_epochs = 2000;
    int agg_batch = 128;
    int agg_n_neg = 1;
    int neighbor_cap = 64;
    bool freeze_base = false;
    bool use_transformed = true;
    std::string ablation = "none"; // none|nh|nc|nl|ns

    // decoder
    int kernels = 50;
    double dec_lr = 0.001;
    double dec_lambda = 0.001;
    double dec_dropout = 0.3;
    int dec_epochs = 150;
    int dec_batch = 128;
    int dec_n_neg = 1;

    // evaluation
    std::string eval_mode = "filtered"; // raw|filtered
    std::string scorer = "decoder";     // decoder|na|transe

    static PipelineConfig load(const std::string& path);
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    // resolved `key = value` lines, for logging and reproducibility
    std::string dump() const;
    std::vector<std::string> keys() const;

    // derived config objects
    PretrainConfig pretrain_config() const;
    MiningConfig mining_config() const;
    AggregatorConfig aggregator_config() const;
    DecoderConfig decoder_config() const;
    Norm norm_choice() const { return parse_norm(norm); }
    RankMode rank_mode() const { return parse_rank_mode(eval_mode); }
};

} // namespace rmna

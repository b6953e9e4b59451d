#pragma once

#include <string>
#include <vector>

#include "rmna/config.hpp"
#include "rmna/evaluator.hpp"
#include "rmna/kg.hpp"

namespace rmna {

// Fixed artifact names inside a run's output directory; every stage reads
// only earlier stages' files, so any stage can resume from disk.
struct Artifacts {
    std::string dir = "out";

    std::string transe() const { return dir + "/transe.ckpt"; }
    std::string rules() const { return dir + "/rules.tsv"; }
    std::string rules_selected() const { return dir + "/rules_selected.tsv"; }
    std::string neighbors() const { return dir + "/neighbors.tsv"; }
    std::string aggregator() const { return dir + "/aggregator.ckpt"; }
    std::string aggregated() const { return dir + "/aggregated.ckpt"; }
    std::string decoder() const { return dir + "/decoder.ckpt"; }
    std::string report_txt() const { return dir + "/report.txt"; }
    std::string report_tsv() const { return dir + "/report.tsv"; }

    void ensure_dir() const;
};

// Train/valid/test with one shared vocabulary (train interns first) and the
// training graph, inverse-augmented when the config asks for it.
struct LoadedData {
    KnowledgeGraph kg;
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
};

LoadedData load_data(const PipelineConfig& cfg);

void run_pretrain(const PipelineConfig& cfg, const Artifacts& art);
void run_mine(const PipelineConfig& cfg, const Artifacts& art);
void run_filter(const PipelineConfig& cfg, const Artifacts& art);
void run_match(const PipelineConfig& cfg, const Artifacts& art);
void run_train_agg(const PipelineConfig& cfg, const Artifacts& art);
void run_train_dec(const PipelineConfig& cfg, const Artifacts& art);
RankingReport run_eval(const PipelineConfig& cfg, const Artifacts& art,
                       const std::string& dump_ranks_path = "");
// All stages in order: pretrain, mine, filter, match, train-agg, train-dec, eval.
RankingReport run_pipeline(const PipelineConfig& cfg, const Artifacts& art);

} // namespace rmna

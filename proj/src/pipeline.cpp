#include "rmna/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "rmna/checkpoint.hpp"
#include "rmna/rules.hpp"
#include "rmna/util.hpp"

namespace rmna {

namespace fs = std::filesystem;

void Artifacts::ensure_dir() const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

namespace {

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw DependencyError("missing input '" + path + "'; produce it with `rmna " + producer +
                              "`");
}

} // namespace

LoadedData load_data(const PipelineConfig& cfg) {
    if (cfg.train_path.empty()) throw ConfigError("config key 'train' is required");
    LoadedData data;
    DatasetLoader loader;
    data.train = loader.load(cfg.train_path, VocabMode::Build);
    if (!cfg.valid_path.empty()) data.valid = loader.load(cfg.valid_path, VocabMode::Build);
    if (!cfg.test_path.empty()) data.test = loader.load(cfg.test_path, VocabMode::Build);
    KnowledgeGraph kg(std::move(loader.entities()), std::move(loader.relations()), data.train);
    data.kg = cfg.inverse_relations ? kg.with_inverse_relations() : std::move(kg);
    log_info("loaded " + cfg.dataset + ": " + std::to_string(data.kg.entity_count()) +
             " entities, " + std::to_string(data.kg.relation_count()) + " relations (" +
             std::to_string(data.kg.original_relation_count()) + " original), " +
             std::to_string(data.train.size()) + "/" + std::to_string(data.valid.size()) + "/" +
             std::to_string(data.test.size()) + " train/valid/test triples");
    return data;
}

void run_pretrain(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    const PretrainResult result = pretrain(data.kg, cfg.pretrain_config(), data.valid);
    save_embedding_table(art.transe(), result.table, data.kg);
    log_info("pretrain: " + std::to_string(result.epochs_run) + " epochs, checkpoint " +
             art.transe());
}

void run_mine(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    const auto rules = mine_path_rules(data.kg, cfg.mining_config());
    save_rules_tsv(art.rules(), rules, data.kg.relations());
    log_info("mine: " + std::to_string(rules.size()) + " rules -> " + art.rules());
}

void run_filter(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    require_artifact(art.rules(), "mine");
    const auto rules = load_rules_tsv(art.rules(), data.kg.relations());
    const auto selected = filter_rules(rules, cfg.hc_min, cfg.conf_min);
    save_rules_tsv(art.rules_selected(), selected, data.kg.relations());
    log_info("filter: kept " + std::to_string(selected.size()) + " of " +
             std::to_string(rules.size()) + " rules -> " + art.rules_selected());
}

void run_match(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    require_artifact(art.rules_selected(), "filter");
    require_artifact(art.transe(), "pretrain");
    const auto rules = load_rules_tsv(art.rules_selected(), data.kg.relations());
    const auto base = load_embedding_table(art.transe(), data.kg);
    const auto transformed =
        match_rules(data.kg, rules, base, cfg.mining_config(), cfg.norm_choice());
    save_neighbors_tsv(art.neighbors(), transformed, data.kg);
    size_t total = 0;
    for (const auto& list : transformed) total += list.size();
    log_info("match: " + std::to_string(total) + " transformed neighbors -> " + art.neighbors());
}

void run_train_agg(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    require_artifact(art.transe(), "pretrain");
    EmbeddingTable base = load_embedding_table(art.transe(), data.kg);

    NeighborSets neighbors = [&] {
        if (!cfg.use_transformed) {
            log_info("train-agg: transformed neighbors disabled");
            return NeighborSets::originals_only(data.kg);
        }
        require_artifact(art.neighbors(), "match");
        return NeighborSets::build(data.kg, load_neighbors_tsv(art.neighbors(), data.kg));
    }();

    const AggregatorConfig agg_cfg = cfg.aggregator_config();
    const Aggregator model(data.kg, neighbors, agg_cfg, cfg.dim);
    AggregatorParams params = AggregatorParams::init(agg_cfg, cfg.dim, agg_cfg.seed);
    const auto result = model.train(params, base);
    save_aggregator(art.aggregator(), params, base, agg_cfg, data.kg);

    const auto [entity_nei, relation_nei] = model.materialize(params, base);
    save_aggregated(art.aggregated(), entity_nei, relation_nei, data.kg);
    const std::string tail =
        result.epoch_losses.empty() ? "no epochs"
                                    : "final loss " + format_double(result.epoch_losses.back());
    log_info("train-agg: " + std::to_string(result.epoch_losses.size()) + " epochs, " + tail);
}

void run_train_dec(const PipelineConfig& cfg, const Artifacts& art) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    require_artifact(art.aggregated(), "train-agg");
    const auto [entity_nei, relation_nei] = load_aggregated(art.aggregated(), data.kg);
    const auto result = train_decoder(data.kg, entity_nei, relation_nei, cfg.decoder_config());
    save_decoder(art.decoder(), result.params, data.kg);
    log_info("train-dec: " + std::to_string(result.epoch_losses.size()) + " epochs, checkpoint " +
             art.decoder());
}

RankingReport run_eval(const PipelineConfig& cfg, const Artifacts& art,
                       const std::string& dump_ranks_path) {
    art.ensure_dir();
    const LoadedData data = load_data(cfg);
    if (data.test.empty()) throw ConfigError("eval requires a non-empty 'test' file");
    const TripleSet known = collect_known({data.train, data.valid, data.test});

    Scorer scorer;
    const Norm norm = cfg.norm_choice();
    // keep loaded artifacts alive inside the closure
    if (cfg.scorer == "decoder") {
        require_artifact(art.decoder(), "train-dec");
        auto params = std::make_shared<DecoderParams>(load_decoder(art.decoder(), data.kg));
        scorer = [params](EntityId h, RelationId r, EntityId t) {
            return convkb_energy(Triple{h, r, t}, *params);
        };
    } else if (cfg.scorer == "na") {
        require_artifact(art.aggregated(), "train-agg");
        auto tables = std::make_shared<std::pair<Tensor2, Tensor2>>(
            load_aggregated(art.aggregated(), data.kg));
        scorer = [tables, norm](EntityId h, RelationId r, EntityId t) {
            return transe_energy(tables->first.row(h), tables->second.row(r),
                                 tables->first.row(t), norm);
        };
    } else if (cfg.scorer == "transe") {
        require_artifact(art.transe(), "pretrain");
        auto table = std::make_shared<EmbeddingTable>(load_embedding_table(art.transe(), data.kg));
        scorer = [table, norm](EntityId h, RelationId r, EntityId t) {
            return transe_energy(table->entity(h), table->relation(r), table->entity(t), norm);
        };
    } else {
        throw ConfigError("unknown scorer '" + cfg.scorer + "' (expected decoder|na|transe)");
    }

    const RankingReport report =
        evaluate(scorer, data.test, data.kg.entity_count(), known, cfg.rank_mode());
    save_report_tsv(art.report_tsv(), report);
    {
        std::ofstream txt(art.report_txt());
        txt << format_report(report);
    }
    if (!dump_ranks_path.empty()) {
        std::ofstream ranks(dump_ranks_path);
        ranks << "head_rank\ttail_rank\n";
        for (const RankPair& rp : report.per_triple_ranks)
            ranks << rp.head_rank << '\t' << rp.tail_rank << '\n';
    }
    log_info("eval (" + rank_mode_name(report.mode) + ", scorer " + cfg.scorer +
             "): mrr " + format_double(report.mrr) + ", hits@10 " +
             format_double(report.hits_at.at(10)));
    return report;
}

RankingReport run_pipeline(const PipelineConfig& cfg, const Artifacts& art) {
    run_pretrain(cfg, art);
    if (cfg.use_transformed) {
        run_mine(cfg, art);
        run_filter(cfg, art);
        run_match(cfg, art);
    } else {
        log_info("pipeline: rule stages skipped (use_transformed = false)");
    }
    run_train_agg(cfg, art);
    run_train_dec(cfg, art);
    return run_eval(cfg, art);
}

} // namespace rmna

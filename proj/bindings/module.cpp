// Python bindings for the core pipeline operations.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rmna/config.hpp"
#include "rmna/pipeline.hpp"
#include "rmna/rules.hpp"

namespace py = pybind11;
using namespace rmna;

namespace {

std::vector<std::vector<float>> tensor_rows(const Tensor2& t) {
    std::vector<std::vector<float>> out(t.rows);
    for (size_t r = 0; r < t.rows; ++r) out[r].assign(t.row(r).begin(), t.row(r).end());
    return out;
}

py::dict report_dict(const RankingReport& report) {
    py::dict d;
    d["mode"] = rank_mode_name(report.mode);
    d["mrr"] = report.mrr;
    py::dict hits;
    for (const auto& [n, v] : report.hits_at) hits[py::int_(n)] = v;
    d["hits"] = hits;
    py::list ranks;
    for (const RankPair& rp : report.per_triple_ranks)
        ranks.append(py::make_tuple(rp.head_rank, rp.tail_rank));
    d["ranks"] = ranks;
    return d;
}

PipelineConfig config_from(const std::string& path, const py::dict& overrides) {
    PipelineConfig cfg;
    if (!path.empty()) cfg = PipelineConfig::load(path);
    for (const auto& item : overrides)
        cfg.set(py::cast<std::string>(item.first), py::cast<std::string>(py::str(item.second)));
    return cfg;
}

} // namespace

PYBIND11_MODULE(_rmna, m) {
    m.doc() = "rule-mined neighbor aggregation for knowledge-graph link prediction";

    py::register_exception<Error>(m, "RmnaError");

    py::class_<Triple>(m, "Triple")
        .def(py::init<EntityId, RelationId, EntityId>())
        .def_readonly("head", &Triple::head)
        .def_readonly("rel", &Triple::rel)
        .def_readonly("tail", &Triple::tail)
        .def("__repr__", [](const Triple& t) {
            return "Triple(" + std::to_string(t.head) + ", " + std::to_string(t.rel) + ", " +
                   std::to_string(t.tail) + ")";
        })
        .def("__eq__", [](const Triple& a, const Triple& b) { return a == b; });

    py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
        .def_static("load", &KnowledgeGraph::load, py::arg("path"))
        .def("with_inverse_relations", &KnowledgeGraph::with_inverse_relations)
        .def_property_readonly("entity_count", &KnowledgeGraph::entity_count)
        .def_property_readonly("relation_count", &KnowledgeGraph::relation_count)
        .def_property_readonly("triple_count",
                               [](const KnowledgeGraph& kg) { return kg.triples().size(); })
        .def("triples", [](const KnowledgeGraph& kg) { return kg.triples(); })
        .def("contains", &KnowledgeGraph::contains)
        .def("entity_label",
             [](const KnowledgeGraph& kg, EntityId e) { return kg.entities().label(e); })
        .def("relation_label",
             [](const KnowledgeGraph& kg, RelationId r) { return kg.relations().label(r); })
        .def("entity_id",
             [](const KnowledgeGraph& kg, const std::string& s) { return kg.entities().require(s); })
        .def("relation_id",
             [](const KnowledgeGraph& kg, const std::string& s) { return kg.relations().require(s); })
        .def("one_hop_neighbors",
             [](const KnowledgeGraph& kg, EntityId e) {
                 std::vector<std::pair<RelationId, EntityId>> out;
                 for (const Neighbor& n : kg.one_hop_neighbors(e)) out.push_back({n.rel, n.entity});
                 return out;
             })
        .def("self_loop_relation", &KnowledgeGraph::self_loop_relation)
        .def("walks_up_to",
             [](const KnowledgeGraph& kg, EntityId e, int max_len) {
                 std::vector<std::pair<std::vector<RelationId>, EntityId>> out;
                 for (const auto& w : kg.walks_up_to(e, max_len)) out.push_back({w.rels, w.end});
                 return out;
             })
        .def("sample_negatives", &KnowledgeGraph::sample_negatives, py::arg("triple"),
             py::arg("n"), py::arg("seed"))
        .def("save_tsv", &KnowledgeGraph::save_tsv);

    py::class_<RuleMetrics>(m, "RuleMetrics")
        .def_readonly("support", &RuleMetrics::support)
        .def_readonly("head_coverage", &RuleMetrics::head_coverage)
        .def_readonly("confidence", &RuleMetrics::confidence);

    py::class_<HornRule>(m, "HornRule")
        .def_readonly("body", &HornRule::body)
        .def_readonly("head", &HornRule::head);

    m.def(
        "mine_path_rules",
        [](const KnowledgeGraph& kg, int l_max) {
            return mine_path_rules(kg, MiningConfig{l_max, 0.0, 0.0});
        },
        py::arg("kg"), py::arg("l_max") = 3);
    m.def(
        "filter_rules",
        [](const std::vector<ScoredRule>& rules, double hc_min, double conf_min) {
            return filter_rules(rules, hc_min, conf_min);
        },
        py::arg("rules"), py::arg("hc_min"), py::arg("conf_min"));

    m.def(
        "evaluate",
        [](const py::function& scorer, const std::vector<Triple>& test, size_t entity_count,
           const std::vector<Triple>& known, const std::string& mode) {
            TripleSet known_set;
            for (const Triple& t : known) known_set.insert(t);
            Scorer s = [&scorer](EntityId h, RelationId r, EntityId t) {
                return py::cast<double>(scorer(h, r, t));
            };
            return report_dict(
                evaluate(s, test, entity_count, known_set, parse_rank_mode(mode)));
        },
        py::arg("scorer"), py::arg("test"), py::arg("entity_count"),
        py::arg("known") = std::vector<Triple>{}, py::arg("mode") = "filtered");

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_static("load", &PipelineConfig::load)
        .def("set", &PipelineConfig::set)
        .def("get", &PipelineConfig::get)
        .def("dump", &PipelineConfig::dump)
        .def("keys", &PipelineConfig::keys);

    m.def(
        "run_pipeline",
        [](const std::string& config_path, const std::string& out_dir,
           const py::dict& overrides) {
            const PipelineConfig cfg = config_from(config_path, overrides);
            return report_dict(run_pipeline(cfg, Artifacts{out_dir}));
        },
        py::arg("config_path") = "", py::arg("out_dir") = "out",
        py::arg("overrides") = py::dict());
    m.def(
        "run_stage",
        [](const std::string& stage, const std::string& config_path, const std::string& out_dir,
           const py::dict& overrides) {
            const PipelineConfig cfg = config_from(config_path, overrides);
            const Artifacts art{out_dir};
            if (stage == "pretrain")
                run_pretrain(cfg, art);
            else if (stage == "mine")
                run_mine(cfg, art);
            else if (stage == "filter")
                run_filter(cfg, art);
            else if (stage == "match")
                run_match(cfg, art);
            else if (stage == "train-agg")
                run_train_agg(cfg, art);
            else if (stage == "train-dec")
                run_train_dec(cfg, art);
            else
                throw ConfigError("unknown stage '" + stage + "'");
        },
        py::arg("stage"), py::arg("config_path") = "", py::arg("out_dir") = "out",
        py::arg("overrides") = py::dict());
    m.def(
        "run_eval",
        [](const std::string& config_path, const std::string& out_dir,
           const py::dict& overrides) {
            const PipelineConfig cfg = config_from(config_path, overrides);
            return report_dict(run_eval(cfg, Artifacts{out_dir}));
        },
        py::arg("config_path") = "", py::arg("out_dir") = "out",
        py::arg("overrides") = py::dict());

    m.def("pretrain_embeddings",
          [](const KnowledgeGraph& kg, int dim, int epochs, uint64_t seed) {
              PretrainConfig cfg;
              cfg.dim = dim;
              cfg.epochs = epochs;
              cfg.seed = seed;
              const auto result = pretrain(kg, cfg);
              py::dict out;
              out["entities"] = tensor_rows(result.table.entity_emb);
              out["relations"] = tensor_rows(result.table.relation_emb);
              out["epoch_losses"] = result.epoch_losses;
              return out;
          },
          py::arg("kg"), py::arg("dim") = 50, py::arg("epochs") = 100, py::arg("seed") = 42);
}

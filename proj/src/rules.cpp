#include "rmna/rules.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include "rmna/util.hpp"

namespace rmna {

namespace {

uint64_t pack_pair(EntityId a, EntityId b) {
    return (static_cast<uint64_t>(a) << 32) | b;
}

// Pairs (e1, e2) with (e1, r, e2) in the graph.
std::vector<uint64_t> head_pair_keys(const KnowledgeGraph& kg, RelationId r) {
    std::unordered_set<uint64_t> pairs;
    for (const Triple& t : kg.triples())
        if (t.rel == r) pairs.insert(pack_pair(t.head, t.tail));
    return {pairs.begin(), pairs.end()};
}

} // namespace

std::vector<uint64_t> body_pair_keys(const KnowledgeGraph& kg,
                                     const std::vector<RelationId>& body) {
    // relational composition: carry (start, current) pairs through the body
    std::unordered_set<uint64_t> frontier;
    for (const Triple& t : kg.triples())
        if (t.rel == body[0]) frontier.insert(pack_pair(t.head, t.tail));
    for (size_t step = 1; step < body.size(); ++step) {
        std::unordered_set<uint64_t> next;
        for (uint64_t key : frontier) {
            const EntityId start = static_cast<EntityId>(key >> 32);
            const EntityId at = static_cast<EntityId>(key & 0xffffffffu);
            for (const Neighbor& n : kg.out_edges(at, body[step]))
                next.insert(pack_pair(start, n.entity));
        }
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    return {frontier.begin(), frontier.end()};
}

uint64_t rule_support(const KnowledgeGraph& kg, const HornRule& rule) {
    const auto body = body_pair_keys(kg, rule.body);
    std::unordered_set<uint64_t> heads;
    for (const Triple& t : kg.triples())
        if (t.rel == rule.head) heads.insert(pack_pair(t.head, t.tail));
    uint64_t support = 0;
    for (uint64_t key : body)
        if (heads.count(key)) ++support;
    return support;
}

double head_coverage(const KnowledgeGraph& kg, const HornRule& rule) {
    const auto heads = head_pair_keys(kg, rule.head);
    if (heads.empty()) throw MetricError("head relation has no instances");
    return static_cast<double>(rule_support(kg, rule)) / static_cast<double>(heads.size());
}

double rule_confidence(const KnowledgeGraph& kg, const HornRule& rule) {
    const auto body = body_pair_keys(kg, rule.body);
    if (body.empty()) throw MetricError("rule body connects no pairs");
    std::unordered_set<uint64_t> heads;
    for (const Triple& t : kg.triples())
        if (t.rel == rule.head) heads.insert(pack_pair(t.head, t.tail));
    uint64_t support = 0;
    for (uint64_t key : body)
        if (heads.count(key)) ++support;
    return static_cast<double>(support) / static_cast<double>(body.size());
}

std::vector<ScoredRule> mine_path_rules(const KnowledgeGraph& kg, const MiningConfig& config) {
    if (config.l_max < 1) throw StateError("l_max must be >= 1");
    const size_t n_rel = kg.relation_count();

    // Per-head mining runs are independent; slots keep the merge deterministic.
    std::vector<std::vector<ScoredRule>> per_head(n_rel);

    parallel_for(n_rel, [&](size_t head_idx) {
        const RelationId head = static_cast<RelationId>(head_idx);

        std::unordered_set<uint64_t> head_pairs;
        std::vector<EntityId> sources;
        {
            std::unordered_set<EntityId> seen;
            for (const Triple& t : kg.triples()) {
                if (t.rel != head) continue;
                head_pairs.insert(pack_pair(t.head, t.tail));
                if (seen.insert(t.head).second) sources.push_back(t.head);
            }
        }
        if (head_pairs.empty()) return;

        // Candidate bodies: relation sequences realized along a walk between
        // some head pair. Any rule with support >= 1 shows up here.
        std::set<std::vector<RelationId>> candidates;
        std::vector<RelationId> rels;
        auto dfs = [&](auto&& self, EntityId source, EntityId at, int depth) -> void {
            for (const Neighbor& n : kg.out_edges(at)) {
                rels.push_back(n.rel);
                if (head_pairs.count(pack_pair(source, n.entity))) candidates.insert(rels);
                if (depth + 1 < config.l_max) self(self, source, n.entity, depth + 1);
                rels.pop_back();
            }
        };
        for (EntityId source : sources) dfs(dfs, source, source, 0);

        std::vector<ScoredRule>& out = per_head[head_idx];
        for (const auto& body : candidates) {
            if (body.size() == 1 && body[0] == head) continue; // r -> r
            const auto body_pairs = body_pair_keys(kg, body);
            uint64_t support = 0;
            for (uint64_t key : body_pairs)
                if (head_pairs.count(key)) ++support;
            if (support == 0) continue;
            RuleMetrics m;
            m.support = support;
            m.head_coverage = static_cast<double>(support) / static_cast<double>(head_pairs.size());
            m.confidence = static_cast<double>(support) / static_cast<double>(body_pairs.size());
            out.push_back({HornRule{body, head}, m});
        }
        // candidates is already lexicographic; enforce (length, lexicographic)
        std::sort(out.begin(), out.end(), [](const ScoredRule& a, const ScoredRule& b) {
            if (a.first.body.size() != b.first.body.size())
                return a.first.body.size() < b.first.body.size();
            return a.first.body < b.first.body;
        });
    });

    std::vector<ScoredRule> merged;
    for (auto& chunk : per_head)
        merged.insert(merged.end(), std::make_move_iterator(chunk.begin()),
                      std::make_move_iterator(chunk.end()));
    return merged;
}

std::vector<ScoredRule> filter_rules(const std::vector<ScoredRule>& rules, double hc_min,
                                     double conf_min) {
    std::vector<ScoredRule> out;
    for (const ScoredRule& r : rules)
        if (r.second.head_coverage > hc_min && r.second.confidence > conf_min) out.push_back(r);
    return out;
}

std::vector<std::vector<TransformedNeighbor>> match_rules(const KnowledgeGraph& kg,
                                                          const std::vector<ScoredRule>& rules,
                                                          const EmbeddingTable& base,
                                                          const MiningConfig& config, Norm norm) {
    if (base.entity_emb.rows < kg.entity_count() ||
        base.relation_emb.rows < kg.relation_vocab_size())
        throw ConsistencyError("embedding table does not cover the graph vocabulary");

    // Group rules by body so each entity walks every distinct body once.
    std::map<std::vector<RelationId>, std::vector<size_t>> by_body;
    for (size_t i = 0; i < rules.size(); ++i) by_body[rules[i].first.body].push_back(i);
    const std::vector<std::pair<std::vector<RelationId>, std::vector<size_t>>> bodies(
        by_body.begin(), by_body.end());

    const size_t n_ent = kg.entity_count();
    std::vector<std::vector<TransformedNeighbor>> transformed(n_ent);
    // raw energies kept in doubles until the global min-max pass
    std::vector<std::vector<double>> raw_scores(n_ent);

    parallel_for(n_ent, [&](size_t ei) {
        const EntityId e = static_cast<EntityId>(ei);
        const auto edges = kg.out_edges(e);

        // best confidence per synthesized (rel, entity)
        std::map<Neighbor, float> best;
        std::vector<EntityId> endpoints;
        std::map<Neighbor, std::pair<float, float>> meta; // hc, l_norm under winning rule

        for (const auto& [body, rule_indices] : bodies) {
            // endpoints reachable from e following the body
            endpoints.clear();
            {
                std::unordered_set<EntityId> frontier{e};
                for (RelationId rel : body) {
                    std::unordered_set<EntityId> next;
                    for (EntityId at : frontier)
                        for (const Neighbor& n : kg.out_edges(at, rel)) next.insert(n.entity);
                    frontier = std::move(next);
                    if (frontier.empty()) break;
                }
                endpoints.assign(frontier.begin(), frontier.end());
            }
            if (endpoints.empty()) continue;

            for (size_t ri : rule_indices) {
                const HornRule& rule = rules[ri].first;
                const RuleMetrics& rm = rules[ri].second;
                for (EntityId target : endpoints) {
                    const Neighbor pair{rule.head, target};
                    if (std::binary_search(edges.begin(), edges.end(), pair)) continue;
                    auto it = best.find(pair);
                    if (it == best.end() || rm.confidence > it->second) {
                        best[pair] = static_cast<float>(rm.confidence);
                        meta[pair] = {static_cast<float>(rm.head_coverage),
                                      static_cast<float>(rule.body.size()) /
                                          static_cast<float>(config.l_max)};
                    }
                }
            }
        }

        auto& out = transformed[ei];
        auto& scores = raw_scores[ei];
        out.reserve(best.size());
        scores.reserve(best.size());
        for (const auto& [pair, conf] : best) {
            const auto [hc, l_norm] = meta.at(pair);
            const double s = transe_energy(base.entity(e), base.relation(pair.rel),
                                           base.entity(pair.entity), norm);
            out.push_back({pair.rel, pair.entity, hc, conf, l_norm, 0.0f});
            scores.push_back(s);
        }
    });

    // min-max normalize s across everything emitted; a degenerate range maps to 0
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& scores : raw_scores)
        for (double s : scores) {
            if (!any) {
                lo = hi = s;
                any = true;
            } else {
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
    const double range = hi - lo;
    for (size_t ei = 0; ei < n_ent; ++ei) {
        for (size_t j = 0; j < transformed[ei].size(); ++j) {
            const double s = raw_scores[ei][j];
            transformed[ei][j].s =
                range > 0.0 ? static_cast<float>((s - lo) / range) : 0.0f;
        }
    }
    return transformed;
}

void save_rules_tsv(const std::string& path, const std::vector<ScoredRule>& rules,
                    const Vocab& relations) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (const ScoredRule& r : rules) {
        std::string body;
        for (size_t i = 0; i < r.first.body.size(); ++i) {
            if (i) body += ',';
            body += relations.label(r.first.body[i]);
        }
        out << body << "\t=>\t" << relations.label(r.first.head) << '\t' << r.second.support
            << '\t' << format_double(r.second.head_coverage) << '\t'
            << format_double(r.second.confidence) << '\n';
    }
}

std::vector<ScoredRule> load_rules_tsv(const std::string& path, const Vocab& relations) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open rule file '" + path + "'");
    std::vector<ScoredRule> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        const std::string ctx = path + ":" + std::to_string(line_no);
        if (fields.size() != 6 || fields[1] != "=>")
            throw ParseError(ctx + ": expected 6 tab-separated rule fields");
        HornRule rule;
        for (auto part : split(fields[0], ','))
            rule.body.push_back(relations.require(std::string(part)));
        rule.head = relations.require(std::string(fields[2]));
        RuleMetrics m;
        m.support = static_cast<uint64_t>(parse_long(fields[3], ctx));
        m.head_coverage = parse_double(fields[4], ctx);
        m.confidence = parse_double(fields[5], ctx);
        out.push_back({std::move(rule), m});
    }
    return out;
}

void save_neighbors_tsv(const std::string& path,
                        const std::vector<std::vector<TransformedNeighbor>>& transformed,
                        const KnowledgeGraph& kg) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (size_t e = 0; e < transformed.size(); ++e) {
        for (const TransformedNeighbor& tn : transformed[e]) {
            out << kg.entities().label(static_cast<uint32_t>(e)) << '\t'
                << kg.relations().label(tn.rel) << '\t' << kg.entities().label(tn.entity) << '\t'
                << format_float(tn.hc) << '\t' << format_float(tn.conf) << '\t'
                << format_float(tn.l_norm) << '\t' << format_float(tn.s) << '\n';
        }
    }
}

std::vector<std::vector<TransformedNeighbor>> load_neighbors_tsv(const std::string& path,
                                                                 const KnowledgeGraph& kg) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open neighbor file '" + path + "'");
    std::vector<std::vector<TransformedNeighbor>> out(kg.entity_count());
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        const std::string ctx = path + ":" + std::to_string(line_no);
        if (fields.size() != 7)
            throw ParseError(ctx + ": expected 7 tab-separated neighbor fields");
        const EntityId e = kg.entities().require(std::string(fields[0]));
        TransformedNeighbor tn;
        tn.rel = kg.relations().require(std::string(fields[1]));
        tn.entity = kg.entities().require(std::string(fields[2]));
        tn.hc = parse_float(fields[3], ctx);
        tn.conf = parse_float(fields[4], ctx);
        tn.l_norm = parse_float(fields[5], ctx);
        tn.s = parse_float(fields[6], ctx);
        out[e].push_back(tn);
    }
    return out;
}

} // namespace rmna

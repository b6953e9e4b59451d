#include "rmna/kg.hpp"

#include <algorithm>
#include <fstream>

#include "rmna/rng.hpp"
#include "rmna/util.hpp"

namespace rmna {

uint32_t Vocab::intern(const std::string& label) {
    auto it = index_.find(label);
    if (it != index_.end()) return it->second;
    const uint32_t id = static_cast<uint32_t>(labels_.size());
    labels_.push_back(label);
    index_.emplace(label, id);
    return id;
}

std::optional<uint32_t> Vocab::find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

uint32_t Vocab::require(const std::string& label) const {
    auto id = find(label);
    if (!id) throw LookupError("unknown label '" + label + "'");
    return *id;
}

const std::string& Vocab::label(uint32_t id) const {
    if (id >= labels_.size()) throw LookupError("label id out of range");
    return labels_[id];
}

std::vector<Triple> DatasetLoader::load(const std::string& path, VocabMode mode) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open triple file '" + path + "'");

    std::vector<Triple> triples;
    TripleSet seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 3 tab-separated fields, got " +
                             std::to_string(fields.size()));
        const std::string h(fields[0]), r(fields[1]), t(fields[2]);
        Triple triple;
        if (mode == VocabMode::Build) {
            triple = {entities_.intern(h), relations_.intern(r), entities_.intern(t)};
        } else {
            triple = {entities_.require(h), relations_.require(r), entities_.require(t)};
        }
        if (seen.insert(triple).second) triples.push_back(triple);
    }
    return triples;
}

KnowledgeGraph::KnowledgeGraph(Vocab entities, Vocab relations, std::vector<Triple> triples)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
    triples_.reserve(triples.size());
    for (const Triple& t : triples) {
        if (t.head >= entities_.size() || t.tail >= entities_.size() ||
            t.rel >= relations_.size())
            throw LookupError("triple references id outside the vocabulary");
        if (triple_set_.insert(t).second) triples_.push_back(t);
    }
    original_relation_count_ = relations_.size();
    build_index();
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
    DatasetLoader loader;
    auto triples = loader.load(path, VocabMode::Build);
    return KnowledgeGraph(std::move(loader.entities()), std::move(loader.relations()),
                          std::move(triples));
}

void KnowledgeGraph::build_index() {
    out_adj_.assign(entities_.size(), {});
    for (const Triple& t : triples_) out_adj_[t.head].push_back({t.rel, t.tail});
    for (auto& edges : out_adj_) std::sort(edges.begin(), edges.end());
}

std::string inverse_label(const std::string& label) { return "inv:" + label; }

KnowledgeGraph KnowledgeGraph::with_inverse_relations() const {
    if (inverse_augmented_)
        throw StateError("graph already carries inverse relations");
    Vocab relations = relations_;
    const size_t orig = relations_.size();
    for (size_t r = 0; r < orig; ++r) relations.intern(inverse_label(relations_.label(r)));
    std::vector<Triple> triples = triples_;
    triples.reserve(triples_.size() * 2);
    for (const Triple& t : triples_)
        triples.push_back({t.tail, static_cast<RelationId>(t.rel + orig), t.head});
    KnowledgeGraph out(entities_, std::move(relations), std::move(triples));
    out.inverse_augmented_ = true;
    out.original_relation_count_ = orig;
    return out;
}

RelationId KnowledgeGraph::inverse_of(RelationId r) const {
    if (!inverse_augmented_) throw StateError("graph has no inverse relations");
    const RelationId orig = static_cast<RelationId>(original_relation_count_);
    return r < orig ? r + orig : r - orig;
}

void KnowledgeGraph::check_entity(EntityId e) const {
    if (e >= entities_.size()) throw LookupError("entity id out of range");
}

std::span<const Neighbor> KnowledgeGraph::out_edges(EntityId e) const {
    check_entity(e);
    const auto& edges = out_adj_[e];
    return {edges.data(), edges.size()};
}

std::span<const Neighbor> KnowledgeGraph::out_edges(EntityId e, RelationId r) const {
    auto edges = out_edges(e);
    auto lo = std::lower_bound(edges.begin(), edges.end(), r,
                               [](const Neighbor& n, RelationId rel) { return n.rel < rel; });
    auto hi = std::upper_bound(edges.begin(), edges.end(), r,
                               [](RelationId rel, const Neighbor& n) { return rel < n.rel; });
    return edges.subspan(static_cast<size_t>(lo - edges.begin()),
                         static_cast<size_t>(hi - lo));
}

std::vector<Neighbor> KnowledgeGraph::one_hop_neighbors(EntityId e) const {
    auto edges = out_edges(e);
    std::vector<Neighbor> out;
    out.reserve(edges.size() + 1);
    out.push_back({self_loop_relation(), e});
    out.insert(out.end(), edges.begin(), edges.end());
    return out;
}

std::vector<KnowledgeGraph::Walk> KnowledgeGraph::walks_up_to(EntityId e, int max_len) const {
    check_entity(e);
    if (max_len < 1) throw StateError("walks_up_to: max_len must be >= 1");
    std::vector<Walk> out;
    std::vector<RelationId> rels;

    // iterative DFS would obscure the backtracking rule; recursion depth is max_len
    auto dfs = [&](auto&& self, EntityId at, EntityId prev, int depth) -> void {
        for (const Neighbor& n : out_edges(at)) {
            if (depth > 0 && inverse_augmented_ && n.entity == prev &&
                n.rel == inverse_of(rels.back()))
                continue; // undoes the previous step
            rels.push_back(n.rel);
            out.push_back({rels, n.entity});
            if (depth + 1 < max_len) self(self, n.entity, at, depth + 1);
            rels.pop_back();
        }
    };
    dfs(dfs, e, e, 0);
    return out;
}

std::vector<Triple> KnowledgeGraph::sample_negatives(const Triple& t, int n, uint64_t seed) const {
    if (entity_count() == 0) throw SamplingError("empty graph");
    std::vector<Triple> out;
    out.reserve(static_cast<size_t>(n));
    Rng rng(seed);
    const long budget = 100L * n;
    long attempts = 0;
    while (static_cast<int>(out.size()) < n) {
        if (attempts >= budget)
            throw SamplingError("no legal corruption found after " + std::to_string(budget) +
                                " attempts");
        ++attempts;
        Triple cand = t;
        const EntityId repl = rng.uniform_u32(static_cast<uint32_t>(entity_count()));
        if (rng.coin())
            cand.head = repl;
        else
            cand.tail = repl;
        if (contains(cand)) continue;
        out.push_back(cand);
    }
    return out;
}

void KnowledgeGraph::save_tsv(const std::string& path) const {
    std::ofstream outf(path);
    if (!outf) throw ParseError("cannot open '" + path + "' for writing");
    for (const Triple& t : triples_) {
        outf << entities_.label(t.head) << '\t' << relations_.label(t.rel) << '\t'
             << entities_.label(t.tail) << '\n';
    }
}

uint64_t vocab_fingerprint(const Vocab& entities, const Vocab& relations) {
    uint64_t h = fnv1a("entities");
    for (const auto& label : entities.labels()) {
        h = fnv1a(label, h);
        h = fnv1a("\x1f", h);
    }
    h = fnv1a("relations", h);
    for (const auto& label : relations.labels()) {
        h = fnv1a(label, h);
        h = fnv1a("\x1f", h);
    }
    return h;
}

} // namespace rmna

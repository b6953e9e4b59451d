#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rmna/error.hpp"

namespace rmna {

using EntityId = uint32_t;
using RelationId = uint32_t;

struct Triple {
    EntityId head;
    RelationId rel;
    EntityId tail;

    bool operator==(const Triple&) const = default;
    auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
    size_t operator()(const Triple& t) const {
        uint64_t h = 0x9E3779B97F4A7C15ULL;
        h = (h ^ t.head) * 0xBF58476D1CE4E5B9ULL;
        h = (h ^ t.rel) * 0x94D049BB133111EBULL;
        h = (h ^ t.tail) * 0xBF58476D1CE4E5B9ULL;
        return static_cast<size_t>(h ^ (h >> 31));
    }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// String interning table; ids are dense and assigned in first-appearance order.
class Vocab {
public:
    uint32_t intern(const std::string& label);
    std::optional<uint32_t> find(const std::string& label) const;
    // Throws LookupError when the label is unknown.
    uint32_t require(const std::string& label) const;
    const std::string& label(uint32_t id) const;
    size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, uint32_t> index_;
};

enum class VocabMode { Build, Reuse };

// One outgoing edge or neighbor slot: relation then target entity.
struct Neighbor {
    RelationId rel;
    EntityId entity;

    bool operator==(const Neighbor&) const = default;
    auto operator<=>(const Neighbor&) const = default;
};

// Loads triple TSV files into a shared vocabulary. `Build` extends the
// tables in first-appearance order; `Reuse` rejects unseen labels.
class DatasetLoader {
public:
    std::vector<Triple> load(const std::string& path, VocabMode mode);

    Vocab& entities() { return entities_; }
    Vocab& relations() { return relations_; }
    const Vocab& entities() const { return entities_; }
    const Vocab& relations() const { return relations_; }

private:
    Vocab entities_;
    Vocab relations_;
};

// Immutable triple store with an outgoing-adjacency index. Construction is
// single-writer; all queries are safe to run concurrently afterwards.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(Vocab entities, Vocab relations, std::vector<Triple> triples);

    // Convenience: load a single file with a fresh vocabulary.
    static KnowledgeGraph load(const std::string& path);

    // Adds (t, inv(r), h) for every (h, r, t), doubling the relation count.
    // inv(r) = r + original relation count. Throws StateError if already done.
    KnowledgeGraph with_inverse_relations() const;

    size_t entity_count() const { return entities_.size(); }
    size_t relation_count() const { return relations_.size(); }
    bool inverse_augmented() const { return inverse_augmented_; }
    size_t original_relation_count() const { return original_relation_count_; }

    // Synthetic relation id for the self-loop neighbor every entity gets.
    RelationId self_loop_relation() const { return static_cast<RelationId>(relations_.size()); }
    // Relation rows needed by embedding tables (graph relations + self-loop).
    size_t relation_vocab_size() const { return relations_.size() + 1; }

    RelationId inverse_of(RelationId r) const;

    const std::vector<Triple>& triples() const { return triples_; }
    bool contains(const Triple& t) const { return triple_set_.count(t) > 0; }
    const TripleSet& triple_set() const { return triple_set_; }

    // Outgoing edges of e, sorted by (relation, entity).
    std::span<const Neighbor> out_edges(EntityId e) const;
    // Edges of e labelled r (binary search within out_edges).
    std::span<const Neighbor> out_edges(EntityId e, RelationId r) const;

    // Self-loop pair first, then out_edges in (relation, entity) order.
    std::vector<Neighbor> one_hop_neighbors(EntityId e) const;

    struct Walk {
        std::vector<RelationId> rels;
        EntityId end;
    };
    // All walks of length 1..max_len from e. A step that immediately undoes
    // the previous one through its inverse relation is skipped; longer cycles
    // are kept. Deterministic depth-first order.
    std::vector<Walk> walks_up_to(EntityId e, int max_len) const;

    // n corruptions of t: coin-flip head/tail, uniform replacement entity,
    // rejecting anything present in the graph. Throws SamplingError after
    // 100*n failed attempts.
    std::vector<Triple> sample_negatives(const Triple& t, int n, uint64_t seed) const;

    void save_tsv(const std::string& path) const;

    const Vocab& entities() const { return entities_; }
    const Vocab& relations() const { return relations_; }

    void check_entity(EntityId e) const;

private:
    Vocab entities_;
    Vocab relations_;
    std::vector<Triple> triples_;
    TripleSet triple_set_;
    std::vector<std::vector<Neighbor>> out_adj_;
    bool inverse_augmented_ = false;
    size_t original_relation_count_ = 0;

    void build_index();
};

// Label given to the synthesized reverse of `label` under inverse augmentation.
std::string inverse_label(const std::string& label);

// Fingerprint of the interning tables, stored in checkpoints and verified on load.
uint64_t vocab_fingerprint(const Vocab& entities, const Vocab& relations);

} // namespace rmna

#pragma once

#include <vector>

#include "rmna/kg.hpp"

namespace rmna {

// One-hop neighbor synthesized from a multi-hop walk through a selected rule.
// hc/conf come from the rule, l_norm is body length over l_max, s is the
// translation-energy fit of (rel, entity) under the base embeddings,
// min-max normalized to [0,1] across all emitted neighbors.
struct TransformedNeighbor {
    RelationId rel;
    EntityId entity;
    float hc;
    float conf;
    float l_norm;
    float s;

    bool operator==(const TransformedNeighbor&) const = default;
};

// Per-entity neighbor lists consumed by the aggregator. original[e] is the
// self-loop pair followed by the outgoing edges; transformed[e] never overlaps
// original[e] on (rel, entity).
struct NeighborSets {
    std::vector<std::vector<Neighbor>> original;
    std::vector<std::vector<TransformedNeighbor>> transformed;

    static NeighborSets build(const KnowledgeGraph& kg,
                              std::vector<std::vector<TransformedNeighbor>> transformed);
    // Original neighbors only; transformed lists left empty.
    static NeighborSets originals_only(const KnowledgeGraph& kg);
};

} // namespace rmna

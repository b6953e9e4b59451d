#include "rmna/neighbors.hpp"

namespace rmna {

NeighborSets NeighborSets::build(const KnowledgeGraph& kg,
                                 std::vector<std::vector<TransformedNeighbor>> transformed) {
    NeighborSets out;
    const size_t n = kg.entity_count();
    out.original.resize(n);
    for (size_t e = 0; e < n; ++e)
        out.original[e] = kg.one_hop_neighbors(static_cast<EntityId>(e));
    if (transformed.empty()) transformed.resize(n);
    if (transformed.size() != n)
        throw ConsistencyError("transformed neighbor lists do not match the entity count");
    out.transformed = std::move(transformed);
    return out;
}

NeighborSets NeighborSets::originals_only(const KnowledgeGraph& kg) {
    return build(kg, {});
}

} // namespace rmna

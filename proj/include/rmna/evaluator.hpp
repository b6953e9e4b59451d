#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmna/kg.hpp"

namespace rmna {

// Triple energy; lower means more plausible, ranking is ascending.
using Scorer = std::function<double(EntityId, RelationId, EntityId)>;

enum class RankMode { Raw, Filtered };

RankMode parse_rank_mode(const std::string& s);
std::string rank_mode_name(RankMode m);

struct RankPair {
    uint32_t head_rank;
    uint32_t tail_rank;
};

struct RankingReport {
    double mrr = 0.0;
    std::map<int, double> hits_at; // keys 1, 3, 10
    std::vector<RankPair> per_triple_ranks;
    RankMode mode = RankMode::Filtered;
};

// Rank of the candidate at `target` among the kept candidates: 1 + the number
// of strictly lower energies + half the exact ties, rounded up. keep[i]
// marks candidates surviving the filter; keep[target] must be true.
uint32_t rank_from_scores(std::span<const double> scores, size_t target,
                          std::span<const uint8_t> keep);

// Head and tail rank of one test triple. In filtered mode, candidates whose
// corrupted triple appears in `known` are removed (except the test triple).
RankPair rank_triple(const Scorer& scorer, const Triple& triple, size_t entity_count,
                     const TripleSet& known, RankMode mode);

// MRR and Hits@{1,3,10} over both head and tail ranks of every test triple.
RankingReport evaluate(const Scorer& scorer, std::span<const Triple> test, size_t entity_count,
                       const TripleSet& known, RankMode mode);

// Aligned plain-text table.
std::string format_report(const RankingReport& report);
// metric<TAB>value lines.
void save_report_tsv(const std::string& path, const RankingReport& report);

TripleSet collect_known(std::initializer_list<std::span<const Triple>> splits);

} // namespace rmna

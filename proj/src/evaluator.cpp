#include "rmna/evaluator.hpp"

#include <cmath>
#include <fstream>

#include "rmna/util.hpp"

namespace rmna {

RankMode parse_rank_mode(const std::string& s) {
    if (s == "raw") return RankMode::Raw;
    if (s == "filtered") return RankMode::Filtered;
    throw ConfigError("unknown ranking mode '" + s + "' (expected raw|filtered)");
}

std::string rank_mode_name(RankMode m) { return m == RankMode::Raw ? "raw" : "filtered"; }

uint32_t rank_from_scores(std::span<const double> scores, size_t target,
                          std::span<const uint8_t> keep) {
    if (scores.size() != keep.size()) throw StateError("rank: keep mask size mismatch");
    if (!keep[target]) throw StateError("rank: target candidate was filtered out");
    const double e = scores[target];
    uint64_t below = 0, ties = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!keep[i] || i == target) continue;
        if (scores[i] < e)
            ++below;
        else if (scores[i] == e)
            ++ties;
    }
    return static_cast<uint32_t>(1 + below + (ties + 1) / 2);
}

namespace {

uint32_t rank_side(const Scorer& scorer, const Triple& triple, size_t entity_count,
                   const TripleSet& known, RankMode mode, bool corrupt_head) {
    std::vector<double> scores(entity_count);
    std::vector<uint8_t> keep(entity_count, 1);
    const EntityId target = corrupt_head ? triple.head : triple.tail;
    for (size_t i = 0; i < entity_count; ++i) {
        const EntityId cand = static_cast<EntityId>(i);
        Triple c = triple;
        if (corrupt_head)
            c.head = cand;
        else
            c.tail = cand;
        if (mode == RankMode::Filtered && cand != target && known.count(c)) {
            keep[i] = 0;
            continue;
        }
        scores[i] = scorer(c.head, c.rel, c.tail);
    }
    return rank_from_scores(scores, target, keep);
}

} // namespace

RankPair rank_triple(const Scorer& scorer, const Triple& triple, size_t entity_count,
                     const TripleSet& known, RankMode mode) {
    return {rank_side(scorer, triple, entity_count, known, mode, true),
            rank_side(scorer, triple, entity_count, known, mode, false)};
}

RankingReport evaluate(const Scorer& scorer, std::span<const Triple> test, size_t entity_count,
                       const TripleSet& known, RankMode mode) {
    if (test.empty()) throw StateError("evaluate: empty test set");
    RankingReport report;
    report.mode = mode;
    report.per_triple_ranks.resize(test.size());
    parallel_for(test.size(), [&](size_t i) {
        report.per_triple_ranks[i] = rank_triple(scorer, test[i], entity_count, known, mode);
    });

    double rr_sum = 0.0;
    std::map<int, uint64_t> hit_counts{{1, 0}, {3, 0}, {10, 0}};
    for (const RankPair& rp : report.per_triple_ranks) {
        for (uint32_t rank : {rp.head_rank, rp.tail_rank}) {
            rr_sum += 1.0 / rank;
            for (auto& [n, count] : hit_counts)
                if (rank <= static_cast<uint32_t>(n)) ++count;
        }
    }
    const double total = 2.0 * static_cast<double>(test.size());
    report.mrr = rr_sum / total;
    for (const auto& [n, count] : hit_counts)
        report.hits_at[n] = static_cast<double>(count) / total;
    return report;
}

std::string format_report(const RankingReport& report) {
    std::string out;
    out += "metric      value\n";
    out += "mode        " + rank_mode_name(report.mode) + "\n";
    out += "triples     " + std::to_string(report.per_triple_ranks.size()) + "\n";
    out += "mrr         " + format_double(report.mrr) + "\n";
    for (const auto& [n, v] : report.hits_at)
        out += "hits@" + std::to_string(n) + std::string(n < 10 ? "      " : "     ") +
               format_double(v) + "\n";
    return out;
}

void save_report_tsv(const std::string& path, const RankingReport& report) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "mode\t" << rank_mode_name(report.mode) << '\n';
    out << "triples\t" << report.per_triple_ranks.size() << '\n';
    out << "mrr\t" << format_double(report.mrr) << '\n';
    for (const auto& [n, v] : report.hits_at)
        out << "hits@" << n << '\t' << format_double(v) << '\n';
}

TripleSet collect_known(std::initializer_list<std::span<const Triple>> splits) {
    TripleSet known;
    for (const auto& split : splits)
        for (const Triple& t : split) known.insert(t);
    return known;
}

} // namespace rmna

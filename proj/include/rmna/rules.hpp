#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rmna/kg.hpp"
#include "rmna/neighbors.hpp"
#include "rmna/transe.hpp"

namespace rmna {

// Closed path-shaped horn rule: body r1(e,x1) ^ ... ^ rn(x_{n-1},e') -> head r(e,e').
struct HornRule {
    std::vector<RelationId> body;
    RelationId head;

    bool operator==(const HornRule&) const = default;
};

struct RuleMetrics {
    uint64_t support = 0;
    double head_coverage = 0.0;
    double confidence = 0.0;
};

struct MiningConfig {
    int l_max = 3;
    double hc_min = 0.0;
    double conf_min = 0.0;
};

using ScoredRule = std::pair<HornRule, RuleMetrics>;

// Distinct ordered pairs connected by a walk following `body`, as packed
// (start << 32 | end) keys in unspecified order.
std::vector<uint64_t> body_pair_keys(const KnowledgeGraph& kg, const std::vector<RelationId>& body);

// Number of distinct pairs satisfying body and head simultaneously.
uint64_t rule_support(const KnowledgeGraph& kg, const HornRule& rule);
// support / |head pairs|; MetricError when the head has no instances.
double head_coverage(const KnowledgeGraph& kg, const HornRule& rule);
// support / |body pairs|; MetricError when the body connects no pairs.
double rule_confidence(const KnowledgeGraph& kg, const HornRule& rule);

// Every rule with body length 1..l_max and support >= 1, except the trivial
// body == [head]. Sorted by (head, body length, body lexicographic).
std::vector<ScoredRule> mine_path_rules(const KnowledgeGraph& kg, const MiningConfig& config);

// Keeps rules with hc > hc_min and conf > conf_min (strict), preserving order.
std::vector<ScoredRule> filter_rules(const std::vector<ScoredRule>& rules, double hc_min,
                                     double conf_min);

// Applies the selected rules to every entity: each body-walk endpoint becomes
// a transformed neighbor under the rule head unless that (rel, entity) pair is
// already an original one-hop neighbor. Duplicates keep the highest-confidence
// derivation. s is Eq.-style translation energy under `base`, min-max
// normalized over everything emitted.
std::vector<std::vector<TransformedNeighbor>> match_rules(const KnowledgeGraph& kg,
                                                          const std::vector<ScoredRule>& rules,
                                                          const EmbeddingTable& base,
                                                          const MiningConfig& config, Norm norm);

// Rule TSV: body labels comma-joined, then "=>", head label, support, hc, conf.
void save_rules_tsv(const std::string& path, const std::vector<ScoredRule>& rules,
                    const Vocab& relations);
std::vector<ScoredRule> load_rules_tsv(const std::string& path, const Vocab& relations);

// Transformed-neighbor TSV: entity, rel, neighbor entity, hc, conf, l_norm, s.
void save_neighbors_tsv(const std::string& path,
                        const std::vector<std::vector<TransformedNeighbor>>& transformed,
                        const KnowledgeGraph& kg);
std::vector<std::vector<TransformedNeighbor>> load_neighbors_tsv(const std::string& path,
                                                                 const KnowledgeGraph& kg);

} // namespace rmna

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rmna/aggregator.hpp"
#include "rmna/decoder.hpp"
#include "rmna/kg.hpp"
#include "rmna/tensor.hpp"
#include "rmna/transe.hpp"

namespace rmna {

// Versioned line-oriented text container: a magic header, key=value metadata,
// then named tensor blocks with shortest-round-trip decimals. Endianness-free
// and diff-able; load(save(x)) reproduces x bitwise.
struct Checkpoint {
    std::string kind;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor2>> tensors;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
    // Load and verify kind and vocabulary fingerprint.
    static Checkpoint load_expect(const std::string& path, const std::string& expected_kind,
                                  uint64_t vocab_hash);

    const Tensor2& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;

    void set_meta(const std::string& key, const std::string& value);
    void set_meta(const std::string& key, long value);
    const std::string& meta_str(const std::string& key) const;
    long meta_long(const std::string& key) const;
};

// Kind-specific packing -----------------------------------------------------

void save_embedding_table(const std::string& path, const EmbeddingTable& table,
                          const KnowledgeGraph& kg);
EmbeddingTable load_embedding_table(const std::string& path, const KnowledgeGraph& kg);

void save_aggregator(const std::string& path, const AggregatorParams& params,
                     const EmbeddingTable& base, const AggregatorConfig& cfg,
                     const KnowledgeGraph& kg);
std::pair<AggregatorParams, EmbeddingTable> load_aggregator(const std::string& path,
                                                            const AggregatorConfig& cfg,
                                                            int base_dim,
                                                            const KnowledgeGraph& kg);

// Materialized neighbor-based embeddings (entities) and transformed relation
// embeddings, the decoder's initial values.
void save_aggregated(const std::string& path, const Tensor2& entity_nei, const Tensor2& relation_nei,
                     const KnowledgeGraph& kg);
std::pair<Tensor2, Tensor2> load_aggregated(const std::string& path, const KnowledgeGraph& kg);

void save_decoder(const std::string& path, const DecoderParams& params, const KnowledgeGraph& kg);
DecoderParams load_decoder(const std::string& path, const KnowledgeGraph& kg);

} // namespace rmna

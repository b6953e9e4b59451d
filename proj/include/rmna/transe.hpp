#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rmna/kg.hpp"
#include "rmna/tensor.hpp"

namespace rmna {

enum class Norm { L1, L2 };

Norm parse_norm(const std::string& s);
std::string norm_name(Norm n);

// Base embeddings for every entity and relation. The relation table carries
// one extra row at index relation_count for the synthetic self-loop relation.
struct EmbeddingTable {
    Tensor2 entity_emb;   // entity_count x d
    Tensor2 relation_emb; // (relation_count + 1) x d
    int dim = 0;

    std::span<const float> entity(EntityId e) const { return entity_emb.row(e); }
    std::span<const float> relation(RelationId r) const { return relation_emb.row(r); }
};

struct PretrainConfig {
    int dim = 100;
    float lr = 0.001f;
    float margin = 1.0f;
    Norm norm = Norm::L1;
    int n_neg = 1;
    int epochs = 1000;
    int batch_size = 128;
    uint64_t seed = 42;
    // early stopping on validation MRR (raw, translation-scored)
    int patience = 50;  // epochs without improvement
    int val_every = 1;  // epochs between validation passes
};

// ||h + r - t|| under the given norm.
double transe_energy(std::span<const float> h, std::span<const float> r,
                     std::span<const float> t, Norm norm);

// max(0, margin + pos - neg)
double margin_loss(double pos_energy, double neg_energy, float margin);
// summed over a batch of (pos, neg) energy pairs
double margin_loss(std::span<const double> pos_energies, std::span<const double> neg_energies,
                   float margin);

// Uniform initialization on +-6/sqrt(d), the customary translation-embedding
// starting box.
EmbeddingTable init_embeddings(const KnowledgeGraph& kg, int dim, uint64_t seed);

struct PretrainResult {
    EmbeddingTable table;
    std::vector<double> epoch_losses;
    int epochs_run = 0;
};

// Margin-loss pretraining with Adam and per-epoch unit-norm projection of
// entity rows. `valid` may be empty; when present it drives early stopping.
PretrainResult pretrain(const KnowledgeGraph& kg, const PretrainConfig& config,
                        std::span<const Triple> valid = {});

} // namespace rmna

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rmna/kg.hpp"
#include "rmna/tensor.hpp"

namespace rmna {

struct DecoderConfig {
    int n_kernels = 50; // 1x3 kernels
    float lr = 0.001f;
    float lambda = 0.001f; // L2 penalty on the scoring vector
    float dropout = 0.3f;
    int epochs = 150;
    int batch_size = 128;
    int n_neg = 1;
    uint64_t seed = 42;
};

// Multi-kernel convolutional scorer over [h, r, t] stacked column-wise.
// Entity/relation embeddings start from the aggregated tables and fine-tune.
struct DecoderParams {
    Tensor2 entity_emb;   // entity_count x d
    Tensor2 relation_emb; // relation_count x d
    Tensor2 kernels;      // n_kernels x 3
    Tensor2 w_rl;         // 1 x (n_kernels * d)
    float lambda = 0.001f;

    int dim() const { return static_cast<int>(entity_emb.cols); }
};

DecoderParams init_decoder(const Tensor2& entity_nei, const Tensor2& relation_nei,
                           const DecoderConfig& cfg);

// Row i of [h, r, t] is (h_i, r_i, t_i); each kernel dots every row, ReLU,
// the maps concatenate, and w_rl turns them into a scalar energy. Lower is
// more plausible; ranking is ascending.
double convkb_energy(std::span<const float> h, std::span<const float> r,
                     std::span<const float> t, const DecoderParams& params);
double convkb_energy(const Triple& t, const DecoderParams& params);

struct LabeledTriple {
    Triple triple;
    float label; // +1 positive, -1 negative
};

// sum softplus(y * E) + lambda/2 * ||w_rl||^2
double convkb_loss(std::span<const LabeledTriple> batch, const DecoderParams& params);

struct DecoderGrads {
    Tensor2 entity_emb;
    Tensor2 relation_emb;
    Tensor2 kernels;
    Tensor2 w_rl;
    std::vector<uint32_t> ent_rows, rel_rows;

    static DecoderGrads like(const DecoderParams& p);
    void zero();
};

// Loss plus analytic gradients; dropout applies only when a mask rng seed is
// provided (training path).
double convkb_loss_and_grads(std::span<const LabeledTriple> batch, const DecoderParams& params,
                             DecoderGrads& grads, float dropout_p, uint64_t drop_seed,
                             bool train);

struct DecoderTrainResult {
    DecoderParams params;
    std::vector<double> epoch_losses;
};

DecoderTrainResult train_decoder(const KnowledgeGraph& kg, const Tensor2& entity_nei,
                                 const Tensor2& relation_nei, const DecoderConfig& cfg);

} // namespace rmna

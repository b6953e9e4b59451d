#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rmna/kg.hpp"
#include "rmna/neighbors.hpp"
#include "rmna/tensor.hpp"
#include "rmna/transe.hpp"

namespace rmna {

// Which metadata scalars enter the transformed-neighbor input, in the fixed
// order hc, conf, l_norm, s. The named ablations each drop exactly one.
struct FeatureMask {
    bool use_hc = true;
    bool use_conf = true;
    bool use_lnorm = true;
    bool use_s = true;

    int active() const {
        return static_cast<int>(use_hc) + static_cast<int>(use_conf) +
               static_cast<int>(use_lnorm) + static_cast<int>(use_s);
    }
    // "none" keeps all four; nh/nc/nl/ns remove hc/conf/l_norm/s.
    static FeatureMask from_ablation(const std::string& name);
};

struct AggregatorConfig {
    int d1 = 100, d2 = 200;
    int d_q1 = 25, d_q2 = 50;
    int d_k1 = 25, d_k2 = 50;
    int d_v1 = 25, d_v2 = 50;
    int k_m = 2; // multi-head attention heads
    int k_s = 4; // self-attention heads
    float lr = 0.001f;
    float margin = 1.0f;
    float dropout = 0.3f;
    float leaky_slope = 0.2f;
    int epochs = 2000;
    int batch_size = 128;
    int n_neg = 1;
    int neighbor_cap = 64; // per type per entity, resampled each epoch
    bool freeze_base = false;
    Norm norm = Norm::L1;
    FeatureMask mask;
    uint64_t seed = 42;

    void validate() const;
};

struct LayerDims {
    int d_in = 0;  // incoming embedding width
    int d_out = 0; // d(l)
    int d_qk = 0;  // query/key width (equal by construction)
    int d_v = 0;
    int meta = 0;  // metadata scalars appended to transformed inputs
};

LayerDims layer_dims(const AggregatorConfig& cfg, int layer, int base_dim);

// All learnable tensors of one aggregation layer. Vectors are stored as
// 1 x n matrices so every parameter enumerates uniformly.
struct LayerParams {
    Tensor2 w_c_o;               // d_out x 3*d_in
    Tensor2 w_c_t;               // d_out x (3*d_in + meta)
    std::vector<Tensor2> w_b_o;  // k_m of 1 x d_out
    std::vector<Tensor2> w_b_t;  // k_m of 1 x d_out
    std::vector<Tensor2> w_q;    // k_s of d_out x d_qk
    std::vector<Tensor2> w_k;    // k_s of d_out x d_qk
    std::vector<Tensor2> w_v;    // k_s of d_out x d_v
    Tensor2 w_f;                 // d_out x 2*k_m*d_v*k_s
    Tensor2 b_f;                 // 1 x d_out
    Tensor2 w_r;                 // d_out x base_dim
};

struct AggregatorParams {
    std::array<LayerParams, 2> layers;

    static AggregatorParams init(const AggregatorConfig& cfg, int base_dim, uint64_t seed);
};

// Deterministic enumeration of every parameter tensor (checkpointing, Adam,
// gradient tests all share it).
void for_each_tensor(AggregatorParams& params,
                     const std::function<void(const std::string&, Tensor2&)>& fn);
void for_each_tensor(const AggregatorParams& params,
                     const std::function<void(const std::string&, const Tensor2&)>& fn);

// Gradient accumulators shaped like the parameters plus the base tables.
struct AggregatorGrads {
    AggregatorParams params;
    Tensor2 ent; // entity_count x base_dim
    Tensor2 rel; // (relation_count + 1) x base_dim
    std::vector<uint32_t> ent_rows, rel_rows;

    static AggregatorGrads like(const AggregatorConfig& cfg, int base_dim, size_t entity_count,
                                size_t relation_vocab);
    void zero();
};

// ---------------------------------------------------------------------------
// Elementary operations, exposed for direct testing.

// W_c,o * [e, r, t]
Tensor1 build_original_input(const Tensor2& w_c_o, std::span<const float> e_in,
                             std::span<const float> r_in, std::span<const float> t_in);
// W_c,t * [e, r, t, enabled metadata scalars]
Tensor1 build_transformed_input(const Tensor2& w_c_t, std::span<const float> e_in,
                                std::span<const float> r_in, std::span<const float> t_in,
                                const TransformedNeighbor& tn, const FeatureMask& mask);
// softmax over LeakyReLU(w_b . c_i); inputs must be non-empty
std::vector<float> neighbor_attention(const Tensor2& w_b, std::span<const Tensor1> inputs,
                                      float leaky_slope);
// ELU(sum_i weights[i] * inputs[i]); empty input set yields a zero vector
Tensor1 aggregate_head(std::span<const Tensor1> inputs, std::span<const float> weights,
                       size_t dim);
// softmax(Q K^T / sqrt(d_k)) V for one self-attention head
Tensor2 self_attention_head(const Tensor2& X, const Tensor2& w_q, const Tensor2& w_k,
                            const Tensor2& w_v);
// ||h_nei + r_nei - t_nei||
double na_energy(std::span<const float> h_nei, std::span<const float> r_nei,
                 std::span<const float> t_nei, Norm norm);

// ---------------------------------------------------------------------------

// Everything recorded during one layer's forward pass that the backward pass
// consumes.
struct LayerTrace {
    std::vector<Neighbor> orig;
    std::vector<TransformedNeighbor> trans;
    std::vector<Tensor1> x_o, x_t; // concatenated inputs
    std::vector<Tensor1> c_o, c_t; // W_c x, after dropout in train mode
    std::vector<std::vector<uint8_t>> drop_o, drop_t;
    std::vector<std::vector<float>> pre_o, pre_t;     // [k_m][n] logit preactivations
    std::vector<std::vector<float>> alpha_o, alpha_t; // [k_m][n] attention weights
    std::vector<Tensor1> u_o, u_t;                    // [k_m] pre-ELU sums
    Tensor2 X;                                        // 2*k_m x d_out hidden vectors
    std::vector<Tensor2> Q, K, V, A, Z;               // per self-attention head
    Tensor1 z;                                        // flattened, after dropout
    std::vector<uint8_t> drop_z;
    Tensor1 f;   // W_f z + b_f
    Tensor1 out; // ELU(f)
};

// Two-layer hierarchical neighbor aggregation over a fixed graph and
// neighbor sets. Immutable with respect to the graph; training mutates only
// the parameter/embedding arguments.
class Aggregator {
public:
    Aggregator(const KnowledgeGraph& kg, const NeighborSets& neighbors, AggregatorConfig cfg,
               int base_dim);

    const AggregatorConfig& config() const { return cfg_; }

    // Eval-mode neighbor-based embedding e_nei (full neighbor lists, no dropout).
    Tensor1 embed(EntityId e, const AggregatorParams& params, const EmbeddingTable& base) const;

    // Eval-mode traces of both layers, for inspection in tests.
    std::pair<LayerTrace, LayerTrace> forward_trace(EntityId e, const AggregatorParams& params,
                                                    const EmbeddingTable& base) const;

    // e_nei for every entity (rows of first) and W_r(2) r for every graph
    // relation (rows of second).
    std::pair<Tensor2, Tensor2> materialize(const AggregatorParams& params,
                                            const EmbeddingTable& base) const;

    // E_NA of a triple under eval-mode forward.
    double energy(const Triple& t, const AggregatorParams& params,
                  const EmbeddingTable& base) const;

    // Margin loss and full analytic gradients over explicit (positive,
    // negative) pairs, with eval structure (no dropout, no neighbor cap).
    double loss_and_grads(std::span<const std::pair<Triple, Triple>> pairs,
                          const AggregatorParams& params, const EmbeddingTable& base,
                          AggregatorGrads* grads) const;

    struct TrainResult {
        std::vector<double> epoch_losses;
    };
    // Minibatch Adam on the margin loss; updates params and, unless frozen,
    // the base embeddings in place.
    TrainResult train(AggregatorParams& params, EmbeddingTable& base) const;

private:
    struct EpochSampling {
        // per entity, indices into the neighbor lists (empty vector = keep all)
        std::vector<std::vector<uint32_t>> orig, trans;
        bool active = false;
    };

    struct InputSource {
        int d_in;
        std::function<std::span<const float>(EntityId)> ent;
        std::function<std::span<const float>(RelationId)> rel;
    };

    struct GradSink {
        std::function<void(EntityId, std::span<const float>)> ent;
        std::function<void(RelationId, std::span<const float>)> rel;
    };

    LayerTrace layer_forward(int layer, EntityId e, const LayerParams& lp,
                             const InputSource& src, const EpochSampling* sampling, bool train,
                             uint64_t drop_seed) const;
    void layer_backward(int layer, EntityId e, const LayerTrace& trace,
                        std::span<const float> g_out, const LayerParams& lp, LayerParams& lg,
                        bool train, const GradSink& sink) const;

    double pass(std::span<const std::pair<Triple, Triple>> pairs, const AggregatorParams& params,
                const EmbeddingTable& base, AggregatorGrads* grads,
                const EpochSampling* sampling, bool train, uint64_t drop_salt) const;

    EpochSampling sample_epoch(int epoch) const;

    const KnowledgeGraph& kg_;
    const NeighborSets& nbrs_;
    AggregatorConfig cfg_;
    int base_dim_;
};

} // namespace rmna

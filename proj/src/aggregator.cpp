#include "rmna/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rmna/rng.hpp"
#include "rmna/util.hpp"

namespace rmna {

FeatureMask FeatureMask::from_ablation(const std::string& name) {
    FeatureMask m;
    if (name == "none" || name.empty()) return m;
    if (name == "nh")
        m.use_hc = false;
    else if (name == "nc")
        m.use_conf = false;
    else if (name == "nl")
        m.use_lnorm = false;
    else if (name == "ns")
        m.use_s = false;
    else
        throw ConfigError("unknown ablation '" + name + "' (expected none|nh|nc|nl|ns)");
    return m;
}

void AggregatorConfig::validate() const {
    if (d1 <= 0 || d2 <= 0 || d_v1 <= 0 || d_v2 <= 0 || d_q1 <= 0 || d_q2 <= 0)
        throw ConfigError("aggregator dimensions must be positive");
    if (d_q1 != d_k1 || d_q2 != d_k2)
        throw ConfigError("query and key dimensions must match per layer");
    if (k_m < 1 || k_s < 1) throw ConfigError("head counts must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0,1)");
    if (neighbor_cap < 1) throw ConfigError("neighbor_cap must be >= 1");
}

LayerDims layer_dims(const AggregatorConfig& cfg, int layer, int base_dim) {
    LayerDims d;
    d.meta = cfg.mask.active();
    if (layer == 0) {
        d.d_in = base_dim;
        d.d_out = cfg.d1;
        d.d_qk = cfg.d_q1;
        d.d_v = cfg.d_v1;
    } else {
        d.d_in = cfg.d1;
        d.d_out = cfg.d2;
        d.d_qk = cfg.d_q2;
        d.d_v = cfg.d_v2;
    }
    return d;
}

AggregatorParams AggregatorParams::init(const AggregatorConfig& cfg, int base_dim,
                                        uint64_t seed) {
    cfg.validate();
    AggregatorParams p;
    uint64_t salt = 0;
    auto next_seed = [&] { return Rng::mix(seed, ++salt); };
    for (int l = 0; l < 2; ++l) {
        const LayerDims d = layer_dims(cfg, l, base_dim);
        LayerParams& lp = p.layers[l];
        lp.w_c_o = glorot_init(d.d_out, 3 * d.d_in, next_seed());
        lp.w_c_t = glorot_init(d.d_out, 3 * d.d_in + d.meta, next_seed());
        for (int k = 0; k < cfg.k_m; ++k) {
            lp.w_b_o.push_back(glorot_init(1, d.d_out, next_seed()));
            lp.w_b_t.push_back(glorot_init(1, d.d_out, next_seed()));
        }
        for (int k = 0; k < cfg.k_s; ++k) {
            lp.w_q.push_back(glorot_init(d.d_out, d.d_qk, next_seed()));
            lp.w_k.push_back(glorot_init(d.d_out, d.d_qk, next_seed()));
            lp.w_v.push_back(glorot_init(d.d_out, d.d_v, next_seed()));
        }
        lp.w_f = glorot_init(d.d_out, 2 * cfg.k_m * d.d_v * cfg.k_s, next_seed());
        lp.b_f = Tensor2(1, d.d_out);
        lp.w_r = glorot_init(d.d_out, base_dim, next_seed());
    }
    return p;
}

void for_each_tensor(AggregatorParams& params,
                     const std::function<void(const std::string&, Tensor2&)>& fn) {
    for (int l = 0; l < 2; ++l) {
        const std::string pre = "l" + std::to_string(l + 1) + ".";
        LayerParams& lp = params.layers[l];
        fn(pre + "w_c_o", lp.w_c_o);
        fn(pre + "w_c_t", lp.w_c_t);
        for (size_t k = 0; k < lp.w_b_o.size(); ++k)
            fn(pre + "w_b_o." + std::to_string(k), lp.w_b_o[k]);
        for (size_t k = 0; k < lp.w_b_t.size(); ++k)
            fn(pre + "w_b_t." + std::to_string(k), lp.w_b_t[k]);
        for (size_t k = 0; k < lp.w_q.size(); ++k) fn(pre + "w_q." + std::to_string(k), lp.w_q[k]);
        for (size_t k = 0; k < lp.w_k.size(); ++k) fn(pre + "w_k." + std::to_string(k), lp.w_k[k]);
        for (size_t k = 0; k < lp.w_v.size(); ++k) fn(pre + "w_v." + std::to_string(k), lp.w_v[k]);
        fn(pre + "w_f", lp.w_f);
        fn(pre + "b_f", lp.b_f);
        fn(pre + "w_r", lp.w_r);
    }
}

void for_each_tensor(const AggregatorParams& params,
                     const std::function<void(const std::string&, const Tensor2&)>& fn) {
    for_each_tensor(const_cast<AggregatorParams&>(params),
                    [&](const std::string& name, Tensor2& t) { fn(name, t); });
}

AggregatorGrads AggregatorGrads::like(const AggregatorConfig& cfg, int base_dim,
                                      size_t entity_count, size_t relation_vocab) {
    AggregatorGrads g;
    g.params = AggregatorParams::init(cfg, base_dim, 0);
    for_each_tensor(g.params, [](const std::string&, Tensor2& t) { t.zero(); });
    g.ent = Tensor2(entity_count, static_cast<size_t>(base_dim));
    g.rel = Tensor2(relation_vocab, static_cast<size_t>(base_dim));
    return g;
}

void AggregatorGrads::zero() {
    for_each_tensor(params, [](const std::string&, Tensor2& t) { t.zero(); });
    for (uint32_t r : ent_rows) std::fill(ent.row(r).begin(), ent.row(r).end(), 0.0f);
    for (uint32_t r : rel_rows) std::fill(rel.row(r).begin(), rel.row(r).end(), 0.0f);
    ent_rows.clear();
    rel_rows.clear();
}

// ---------------------------------------------------------------------------
// Elementary operations

Tensor1 build_original_input(const Tensor2& w_c_o, std::span<const float> e_in,
                             std::span<const float> r_in, std::span<const float> t_in) {
    const std::span<const float> parts[] = {e_in, r_in, t_in};
    const Tensor1 x = concat(parts);
    return matvec(w_c_o, x.span());
}

Tensor1 build_transformed_input(const Tensor2& w_c_t, std::span<const float> e_in,
                                std::span<const float> r_in, std::span<const float> t_in,
                                const TransformedNeighbor& tn, const FeatureMask& mask) {
    Tensor1 x(e_in.size() * 3 + static_cast<size_t>(mask.active()));
    size_t off = 0;
    for (auto part : {e_in, r_in, t_in}) {
        std::copy(part.begin(), part.end(), x.v.begin() + off);
        off += part.size();
    }
    if (mask.use_hc) x[off++] = tn.hc;
    if (mask.use_conf) x[off++] = tn.conf;
    if (mask.use_lnorm) x[off++] = tn.l_norm;
    if (mask.use_s) x[off++] = tn.s;
    return matvec(w_c_t, x.span());
}

std::vector<float> neighbor_attention(const Tensor2& w_b, std::span<const Tensor1> inputs,
                                      float leaky_slope) {
    if (inputs.empty()) throw StateError("neighbor_attention: empty neighbor set");
    std::vector<float> logits(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i)
        logits[i] = leaky_relu(static_cast<float>(dot(w_b.row(0), inputs[i].span())), leaky_slope);
    softmax_inplace(logits);
    return logits;
}

Tensor1 aggregate_head(std::span<const Tensor1> inputs, std::span<const float> weights,
                       size_t dim) {
    Tensor1 out(dim);
    if (inputs.empty()) return out; // empty set aggregates to zero
    if (inputs.size() != weights.size())
        throw ShapeError("aggregate_head: weight count mismatch");
    for (size_t i = 0; i < inputs.size(); ++i) axpy(out.span(), weights[i], inputs[i].span());
    for (float& v : out.v) v = elu(v);
    return out;
}

Tensor2 self_attention_head(const Tensor2& X, const Tensor2& w_q, const Tensor2& w_k,
                            const Tensor2& w_v) {
    const Tensor2 Q = matmul(X, w_q);
    const Tensor2 K = matmul(X, w_k);
    const Tensor2 V = matmul(X, w_v);
    Tensor2 S = matmul_transposed(Q, K);
    const float scale = 1.0f / std::sqrt(static_cast<float>(w_k.cols));
    for (float& v : S.v) v *= scale;
    for (size_t r = 0; r < S.rows; ++r) softmax_inplace(S.row(r));
    return matmul(S, V);
}

double na_energy(std::span<const float> h_nei, std::span<const float> r_nei,
                 std::span<const float> t_nei, Norm norm) {
    return transe_energy(h_nei, r_nei, t_nei, norm);
}

// ---------------------------------------------------------------------------

Aggregator::Aggregator(const KnowledgeGraph& kg, const NeighborSets& neighbors,
                       AggregatorConfig cfg, int base_dim)
    : kg_(kg), nbrs_(neighbors), cfg_(std::move(cfg)), base_dim_(base_dim) {
    cfg_.validate();
    if (nbrs_.original.size() != kg_.entity_count())
        throw ConsistencyError("neighbor sets do not cover the graph");
}

LayerTrace Aggregator::layer_forward(int layer, EntityId e, const LayerParams& lp,
                                     const InputSource& src, const EpochSampling* sampling,
                                     bool train, uint64_t drop_seed) const {
    const LayerDims dims = layer_dims(cfg_, layer, base_dim_);
    const size_t d_out = static_cast<size_t>(dims.d_out);
    LayerTrace t;

    // neighbor lists, optionally subsampled for this epoch
    const auto& all_o = nbrs_.original[e];
    const auto& all_t = nbrs_.transformed[e];
    if (sampling && sampling->active) {
        for (uint32_t i : sampling->orig[e]) t.orig.push_back(all_o[i]);
        for (uint32_t i : sampling->trans[e]) t.trans.push_back(all_t[i]);
    } else {
        t.orig = all_o;
        t.trans = all_t;
    }

    const std::span<const float> e_in = src.ent(e);
    Rng drop_rng(drop_seed);

    t.x_o.reserve(t.orig.size());
    t.c_o.reserve(t.orig.size());
    for (const Neighbor& n : t.orig) {
        const std::span<const float> parts[] = {e_in, src.rel(n.rel), src.ent(n.entity)};
        t.x_o.push_back(concat(parts));
        Tensor1 c = matvec(lp.w_c_o, t.x_o.back().span());
        if (train && cfg_.dropout > 0.0f) {
            t.drop_o.push_back(dropout_mask(c.size(), cfg_.dropout, drop_rng));
            apply_dropout(c.span(), t.drop_o.back(), cfg_.dropout);
        }
        t.c_o.push_back(std::move(c));
    }
    for (const TransformedNeighbor& tn : t.trans) {
        Tensor1 x(static_cast<size_t>(3 * dims.d_in + dims.meta));
        size_t off = 0;
        for (auto part : {e_in, src.rel(tn.rel), src.ent(tn.entity)}) {
            std::copy(part.begin(), part.end(), x.v.begin() + off);
            off += part.size();
        }
        if (cfg_.mask.use_hc) x[off++] = tn.hc;
        if (cfg_.mask.use_conf) x[off++] = tn.conf;
        if (cfg_.mask.use_lnorm) x[off++] = tn.l_norm;
        if (cfg_.mask.use_s) x[off++] = tn.s;
        t.x_t.push_back(std::move(x));
        Tensor1 c = matvec(lp.w_c_t, t.x_t.back().span());
        if (train && cfg_.dropout > 0.0f) {
            t.drop_t.push_back(dropout_mask(c.size(), cfg_.dropout, drop_rng));
            apply_dropout(c.span(), t.drop_t.back(), cfg_.dropout);
        }
        t.c_t.push_back(std::move(c));
    }

    // per-head attention and hidden vectors; X rows: original heads then
    // transformed heads
    const int k_m = cfg_.k_m;
    t.X = Tensor2(static_cast<size_t>(2 * k_m), d_out);
    t.pre_o.resize(k_m);
    t.pre_t.resize(k_m);
    t.alpha_o.resize(k_m);
    t.alpha_t.resize(k_m);
    t.u_o.resize(k_m);
    t.u_t.resize(k_m);
    for (int k = 0; k < k_m; ++k) {
        auto attend = [&](const std::vector<Tensor1>& c, const Tensor2& w_b,
                          std::vector<float>& pre, std::vector<float>& alpha, Tensor1& u,
                          std::span<float> x_row) {
            u = Tensor1(d_out);
            if (c.empty()) return; // zero hidden vector, empty softmax never forms
            pre.resize(c.size());
            alpha.resize(c.size());
            for (size_t i = 0; i < c.size(); ++i)
                pre[i] = static_cast<float>(dot(w_b.row(0), c[i].span()));
            for (size_t i = 0; i < c.size(); ++i)
                alpha[i] = leaky_relu(pre[i], cfg_.leaky_slope);
            softmax_inplace(alpha);
            for (size_t i = 0; i < c.size(); ++i) axpy(u.span(), alpha[i], c[i].span());
            for (size_t i = 0; i < d_out; ++i) x_row[i] = elu(u[i]);
        };
        attend(t.c_o, lp.w_b_o[k], t.pre_o[k], t.alpha_o[k], t.u_o[k],
               t.X.row(static_cast<size_t>(k)));
        attend(t.c_t, lp.w_b_t[k], t.pre_t[k], t.alpha_t[k], t.u_t[k],
               t.X.row(static_cast<size_t>(k_m + k)));
    }

    // self-attention over the 2*k_m hidden vectors
    const int k_s = cfg_.k_s;
    const size_t rows = static_cast<size_t>(2 * k_m);
    const size_t d_v = static_cast<size_t>(dims.d_v);
    t.z = Tensor1(rows * d_v * static_cast<size_t>(k_s));
    const float scale = 1.0f / std::sqrt(static_cast<float>(dims.d_qk));
    for (int k = 0; k < k_s; ++k) {
        t.Q.push_back(matmul(t.X, lp.w_q[k]));
        t.K.push_back(matmul(t.X, lp.w_k[k]));
        t.V.push_back(matmul(t.X, lp.w_v[k]));
        Tensor2 A = matmul_transposed(t.Q.back(), t.K.back());
        for (float& v : A.v) v *= scale;
        for (size_t r = 0; r < A.rows; ++r) softmax_inplace(A.row(r));
        t.Z.push_back(matmul(A, t.V.back()));
        t.A.push_back(std::move(A));
        // heads concatenate on the feature axis; rows flatten row-major
        const Tensor2& Z = t.Z.back();
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < d_v; ++c)
                t.z[r * (d_v * k_s) + static_cast<size_t>(k) * d_v + c] = Z.at(r, c);
    }
    if (train && cfg_.dropout > 0.0f) {
        t.drop_z = dropout_mask(t.z.size(), cfg_.dropout, drop_rng);
        apply_dropout(t.z.span(), t.drop_z, cfg_.dropout);
    }

    t.f = matvec(lp.w_f, t.z.span());
    add_inplace(t.f.span(), lp.b_f.row(0));
    t.out = Tensor1(d_out);
    for (size_t i = 0; i < d_out; ++i) t.out[i] = elu(t.f[i]);
    return t;
}

void Aggregator::layer_backward(int layer, EntityId e, const LayerTrace& t,
                                std::span<const float> g_out, const LayerParams& lp,
                                LayerParams& lg, bool train, const GradSink& sink) const {
    const LayerDims dims = layer_dims(cfg_, layer, base_dim_);
    const size_t d_out = static_cast<size_t>(dims.d_out);
    const size_t d_in = static_cast<size_t>(dims.d_in);
    const int k_m = cfg_.k_m;
    const int k_s = cfg_.k_s;
    const size_t rows = static_cast<size_t>(2 * k_m);
    const size_t d_v = static_cast<size_t>(dims.d_v);

    // fused output
    Tensor1 g_f(d_out);
    for (size_t i = 0; i < d_out; ++i) g_f[i] = g_out[i] * elu_grad(t.f[i]);
    add_inplace(lg.b_f.row(0), g_f.span());
    outer_accum(lg.w_f, g_f.span(), t.z.span());
    Tensor1 g_z(t.z.size());
    matvec_transposed_into(lp.w_f, g_f.span(), g_z.span());
    if (train && !t.drop_z.empty()) apply_dropout(g_z.span(), t.drop_z, cfg_.dropout);

    // self-attention heads
    Tensor2 g_X(rows, d_out);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dims.d_qk));
    for (int k = 0; k < k_s; ++k) {
        Tensor2 g_Z(rows, d_v);
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < d_v; ++c)
                g_Z.at(r, c) = g_z[r * (d_v * k_s) + static_cast<size_t>(k) * d_v + c];

        const Tensor2& A = t.A[k];
        const Tensor2& Q = t.Q[k];
        const Tensor2& K = t.K[k];
        const Tensor2& V = t.V[k];

        Tensor2 g_A = matmul_transposed(g_Z, V); // rows x rows
        // g_V = A^T g_Z
        Tensor2 g_V(rows, d_v);
        for (size_t i = 0; i < rows; ++i)
            for (size_t c = 0; c < d_v; ++c) {
                double acc = 0.0;
                for (size_t r = 0; r < rows; ++r)
                    acc += static_cast<double>(A.at(r, i)) * g_Z.at(r, c);
                g_V.at(i, c) = static_cast<float>(acc);
            }
        // softmax backward per row: g_S = A .* (g_A - rowdot(g_A, A))
        Tensor2 g_S(rows, rows);
        for (size_t r = 0; r < rows; ++r) {
            const double inner = dot(g_A.row(r), A.row(r));
            for (size_t c = 0; c < rows; ++c)
                g_S.at(r, c) = A.at(r, c) * static_cast<float>(g_A.at(r, c) - inner);
        }
        for (float& v : g_S.v) v *= scale;
        const Tensor2 g_Q = matmul(g_S, K); // rows x d_qk
        // g_K = g_S^T Q
        Tensor2 g_K(rows, static_cast<size_t>(dims.d_qk));
        for (size_t i = 0; i < rows; ++i)
            for (size_t c = 0; c < static_cast<size_t>(dims.d_qk); ++c) {
                double acc = 0.0;
                for (size_t r = 0; r < rows; ++r)
                    acc += static_cast<double>(g_S.at(r, i)) * Q.at(r, c);
                g_K.at(i, c) = static_cast<float>(acc);
            }

        // parameter grads: w_q += X^T g_Q etc.; input grads: g_X += g_Q w_q^T
        for (size_t r = 0; r < rows; ++r) {
            outer_accum(lg.w_q[k], t.X.row(r), g_Q.row(r));
            outer_accum(lg.w_k[k], t.X.row(r), g_K.row(r));
            outer_accum(lg.w_v[k], t.X.row(r), g_V.row(r));
            // g_X.row(r) += w_q g_Q.row(r) + w_k g_K.row(r) + w_v g_V.row(r)
            Tensor1 tmp(d_out);
            matvec_into(lp.w_q[k], g_Q.row(r), tmp.span());
            add_inplace(g_X.row(r), tmp.span());
            matvec_into(lp.w_k[k], g_K.row(r), tmp.span());
            add_inplace(g_X.row(r), tmp.span());
            matvec_into(lp.w_v[k], g_V.row(r), tmp.span());
            add_inplace(g_X.row(r), tmp.span());
        }
    }

    // hidden vectors -> attention -> constructed inputs
    std::vector<Tensor1> g_c_o(t.c_o.size(), Tensor1(d_out));
    std::vector<Tensor1> g_c_t(t.c_t.size(), Tensor1(d_out));
    for (int k = 0; k < k_m; ++k) {
        auto head_back = [&](const std::vector<Tensor1>& c, const std::vector<float>& pre,
                             const std::vector<float>& alpha, const Tensor1& u,
                             std::span<const float> g_h, const Tensor2& w_b, Tensor2& g_w_b,
                             std::vector<Tensor1>& g_c) {
            if (c.empty()) return;
            Tensor1 g_u(d_out);
            for (size_t i = 0; i < d_out; ++i) g_u[i] = g_h[i] * elu_grad(u[i]);
            // softmax over leaky(pre)
            std::vector<float> g_alpha(c.size());
            for (size_t i = 0; i < c.size(); ++i)
                g_alpha[i] = static_cast<float>(dot(g_u.span(), c[i].span()));
            double inner = 0.0;
            for (size_t i = 0; i < c.size(); ++i)
                inner += static_cast<double>(alpha[i]) * g_alpha[i];
            for (size_t i = 0; i < c.size(); ++i) {
                const float g_logit =
                    alpha[i] * static_cast<float>(g_alpha[i] - inner);
                const float g_pre = g_logit * leaky_relu_grad(pre[i], cfg_.leaky_slope);
                axpy(g_w_b.row(0), g_pre, c[i].span());
                axpy(g_c[i].span(), g_pre, w_b.row(0));
                axpy(g_c[i].span(), alpha[i], g_u.span());
            }
        };
        head_back(t.c_o, t.pre_o[k], t.alpha_o[k], t.u_o[k], t.X.row(static_cast<size_t>(k)),
                  lp.w_b_o[k], lg.w_b_o[k], g_c_o);
        head_back(t.c_t, t.pre_t[k], t.alpha_t[k], t.u_t[k],
                  t.X.row(static_cast<size_t>(k_m + k)), lp.w_b_t[k], lg.w_b_t[k], g_c_t);
    }

    // constructed inputs -> W_c and the incoming embeddings; the given
    // entity's own embedding appears in every input, so its gradient is
    // accumulated locally and sunk once
    Tensor1 g_e_in(d_in);
    Tensor1 g_x_o(3 * d_in);
    Tensor1 g_x_t(3 * d_in + static_cast<size_t>(dims.meta));
    for (size_t i = 0; i < t.c_o.size(); ++i) {
        if (train && !t.drop_o.empty()) apply_dropout(g_c_o[i].span(), t.drop_o[i], cfg_.dropout);
        outer_accum(lg.w_c_o, g_c_o[i].span(), t.x_o[i].span());
        matvec_transposed_into(lp.w_c_o, g_c_o[i].span(), g_x_o.span());
        add_inplace(g_e_in.span(), std::span<const float>(g_x_o.v.data(), d_in));
        sink.rel(t.orig[i].rel, std::span<const float>(g_x_o.v.data() + d_in, d_in));
        sink.ent(t.orig[i].entity, std::span<const float>(g_x_o.v.data() + 2 * d_in, d_in));
    }
    for (size_t i = 0; i < t.c_t.size(); ++i) {
        if (train && !t.drop_t.empty()) apply_dropout(g_c_t[i].span(), t.drop_t[i], cfg_.dropout);
        outer_accum(lg.w_c_t, g_c_t[i].span(), t.x_t[i].span());
        matvec_transposed_into(lp.w_c_t, g_c_t[i].span(), g_x_t.span());
        add_inplace(g_e_in.span(), std::span<const float>(g_x_t.v.data(), d_in));
        sink.rel(t.trans[i].rel, std::span<const float>(g_x_t.v.data() + d_in, d_in));
        sink.ent(t.trans[i].entity, std::span<const float>(g_x_t.v.data() + 2 * d_in, d_in));
        // metadata scalars are constants; their gradient slots are dropped
    }
    sink.ent(e, g_e_in.span());
}

// ---------------------------------------------------------------------------
// Forward orchestration

namespace {

// Lazily caches W_r * r for the relations a batch touches.
struct RelTransformCache {
    const Tensor2& w_r;
    const EmbeddingTable& base;
    std::unordered_map<RelationId, Tensor1> rows;

    std::span<const float> get(RelationId r) {
        auto it = rows.find(r);
        if (it == rows.end())
            it = rows.emplace(r, matvec(w_r, base.relation(r))).first;
        return it->second.span();
    }
};

void collect_sorted_unique(std::vector<EntityId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace

std::pair<LayerTrace, LayerTrace> Aggregator::forward_trace(EntityId e,
                                                            const AggregatorParams& params,
                                                            const EmbeddingTable& base) const {
    kg_.check_entity(e);
    InputSource l1src{base_dim_, [&](EntityId x) { return base.entity(x); },
                      [&](RelationId r) { return base.relation(r); }};

    // layer-1 outputs for e and every neighbor entity
    std::vector<EntityId> l1set{e};
    for (const Neighbor& n : nbrs_.original[e]) l1set.push_back(n.entity);
    for (const TransformedNeighbor& tn : nbrs_.transformed[e]) l1set.push_back(tn.entity);
    collect_sorted_unique(l1set);

    std::unordered_map<EntityId, Tensor1> l1out;
    LayerTrace l1trace;
    for (EntityId x : l1set) {
        LayerTrace t = layer_forward(0, x, params.layers[0], l1src, nullptr, false, 0);
        if (x == e) l1trace = t;
        l1out.emplace(x, std::move(t.out));
    }

    RelTransformCache rel1{params.layers[0].w_r, base, {}};
    InputSource l2src{cfg_.d1, [&](EntityId x) -> std::span<const float> { return l1out.at(x).span(); },
                      [&](RelationId r) { return rel1.get(r); }};
    LayerTrace l2trace = layer_forward(1, e, params.layers[1], l2src, nullptr, false, 0);
    return {std::move(l1trace), std::move(l2trace)};
}

Tensor1 Aggregator::embed(EntityId e, const AggregatorParams& params,
                          const EmbeddingTable& base) const {
    return forward_trace(e, params, base).second.out;
}

std::pair<Tensor2, Tensor2> Aggregator::materialize(const AggregatorParams& params,
                                                    const EmbeddingTable& base) const {
    const size_t n_ent = kg_.entity_count();
    Tensor2 l1out(n_ent, static_cast<size_t>(cfg_.d1));
    InputSource l1src{base_dim_, [&](EntityId x) { return base.entity(x); },
                      [&](RelationId r) { return base.relation(r); }};
    parallel_for(n_ent, [&](size_t e) {
        LayerTrace t = layer_forward(0, static_cast<EntityId>(e), params.layers[0], l1src,
                                     nullptr, false, 0);
        std::copy(t.out.v.begin(), t.out.v.end(), l1out.row(e).begin());
    });

    // all relations get transformed; the table is small next to the entities
    Tensor2 rel1(kg_.relation_vocab_size(), static_cast<size_t>(cfg_.d1));
    for (size_t r = 0; r < rel1.rows; ++r)
        matvec_into(params.layers[0].w_r, base.relation(static_cast<RelationId>(r)), rel1.row(r));

    Tensor2 e_nei(n_ent, static_cast<size_t>(cfg_.d2));
    InputSource l2src{cfg_.d1,
                      [&](EntityId x) -> std::span<const float> { return l1out.row(x); },
                      [&](RelationId r) -> std::span<const float> { return rel1.row(r); }};
    parallel_for(n_ent, [&](size_t e) {
        LayerTrace t = layer_forward(1, static_cast<EntityId>(e), params.layers[1], l2src,
                                     nullptr, false, 0);
        std::copy(t.out.v.begin(), t.out.v.end(), e_nei.row(e).begin());
    });

    Tensor2 r_nei(kg_.relation_count(), static_cast<size_t>(cfg_.d2));
    for (size_t r = 0; r < r_nei.rows; ++r)
        matvec_into(params.layers[1].w_r, base.relation(static_cast<RelationId>(r)), r_nei.row(r));
    return {std::move(e_nei), std::move(r_nei)};
}

double Aggregator::energy(const Triple& t, const AggregatorParams& params,
                          const EmbeddingTable& base) const {
    const Tensor1 h = embed(t.head, params, base);
    const Tensor1 tt = embed(t.tail, params, base);
    const Tensor1 r = matvec(params.layers[1].w_r, base.relation(t.rel));
    return na_energy(h.span(), r.span(), tt.span(), cfg_.norm);
}

// ---------------------------------------------------------------------------
// Shared loss/gradient pass over a list of (positive, negative) pairs.

double Aggregator::pass(std::span<const std::pair<Triple, Triple>> pairs,
                        const AggregatorParams& params, const EmbeddingTable& base,
                        AggregatorGrads* grads, const EpochSampling* sampling, bool train,
                        uint64_t drop_salt) const {
    // entities needing layer-2 embeddings, and their one-hop support set
    std::vector<EntityId> l2set;
    for (const auto& [pos, neg] : pairs) {
        l2set.push_back(pos.head);
        l2set.push_back(pos.tail);
        l2set.push_back(neg.head);
        l2set.push_back(neg.tail);
    }
    collect_sorted_unique(l2set);

    auto sampled_entities = [&](EntityId e, std::vector<EntityId>& out) {
        const auto& orig = nbrs_.original[e];
        const auto& trans = nbrs_.transformed[e];
        if (sampling && sampling->active) {
            for (uint32_t i : sampling->orig[e]) out.push_back(orig[i].entity);
            for (uint32_t i : sampling->trans[e]) out.push_back(trans[i].entity);
        } else {
            for (const Neighbor& n : orig) out.push_back(n.entity);
            for (const TransformedNeighbor& tn : trans) out.push_back(tn.entity);
        }
    };
    std::vector<EntityId> l1set = l2set;
    for (EntityId e : l2set) sampled_entities(e, l1set);
    collect_sorted_unique(l1set);

    // layer-1 forwards
    InputSource l1src{base_dim_, [&](EntityId x) { return base.entity(x); },
                      [&](RelationId r) { return base.relation(r); }};
    std::unordered_map<EntityId, LayerTrace> l1traces;
    l1traces.reserve(l1set.size());
    for (EntityId x : l1set)
        l1traces.emplace(x, layer_forward(0, x, params.layers[0], l1src, sampling, train,
                                          Rng::mix(drop_salt, 2 * x)));

    // layer-2 forwards
    RelTransformCache rel1{params.layers[0].w_r, base, {}};
    InputSource l2src{cfg_.d1,
                      [&](EntityId x) -> std::span<const float> { return l1traces.at(x).out.span(); },
                      [&](RelationId r) { return rel1.get(r); }};
    std::unordered_map<EntityId, LayerTrace> l2traces;
    l2traces.reserve(l2set.size());
    for (EntityId x : l2set)
        l2traces.emplace(x, layer_forward(1, x, params.layers[1], l2src, sampling, train,
                                          Rng::mix(drop_salt, 2 * x + 1)));

    // energies and hinge loss; weights accumulate per distinct triple
    RelTransformCache rel2{params.layers[1].w_r, base, {}};
    std::map<Triple, double> weight;
    auto energy_of = [&](const Triple& t) {
        return na_energy(l2traces.at(t.head).out.span(), rel2.get(t.rel),
                         l2traces.at(t.tail).out.span(), cfg_.norm);
    };
    std::map<Triple, double> energies;
    for (const auto& [pos, neg] : pairs) {
        if (!energies.count(pos)) energies[pos] = energy_of(pos);
        if (!energies.count(neg)) energies[neg] = energy_of(neg);
    }
    double loss = 0.0;
    for (const auto& [pos, neg] : pairs) {
        const double slack = cfg_.margin + energies[pos] - energies[neg];
        if (slack <= 0.0) continue;
        loss += slack;
        weight[pos] += 1.0;
        weight[neg] -= 1.0;
    }
    if (!grads) return loss;

    // energy backward into per-entity output gradients and W_r(2)
    const size_t d2 = static_cast<size_t>(cfg_.d2);
    std::map<EntityId, Tensor1> g2;
    Tensor1 diff(d2);
    for (const auto& [t, w] : weight) {
        if (w == 0.0) continue;
        const auto h = l2traces.at(t.head).out.span();
        const auto tl = l2traces.at(t.tail).out.span();
        const auto r = rel2.get(t.rel);
        for (size_t i = 0; i < d2; ++i) diff[i] = h[i] + r[i] - tl[i];
        if (cfg_.norm == Norm::L1) {
            for (float& v : diff.v)
                v = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
        } else {
            const double nrm = std::max(l2_norm(diff.span()), 1e-12);
            for (float& v : diff.v) v = static_cast<float>(v / nrm);
        }
        const float wf = static_cast<float>(w);
        auto& gh = g2.try_emplace(t.head, Tensor1(d2)).first->second;
        axpy(gh.span(), wf, diff.span());
        auto& gt = g2.try_emplace(t.tail, Tensor1(d2)).first->second;
        axpy(gt.span(), -wf, diff.span());
        // r_nei = W_r(2) r
        Tensor1 g_r(d2);
        axpy(g_r.span(), wf, diff.span());
        outer_accum(grads->params.layers[1].w_r, g_r.span(), base.relation(t.rel));
        if (!cfg_.freeze_base) {
            Tensor1 g_rel(static_cast<size_t>(base_dim_));
            matvec_transposed_into(params.layers[1].w_r, g_r.span(), g_rel.span());
            add_inplace(grads->rel.row(t.rel), g_rel.span());
            grads->rel_rows.push_back(t.rel);
        }
    }

    // layer-2 backward, collecting layer-1 output gradients
    std::map<EntityId, Tensor1> g1;
    const size_t d1 = static_cast<size_t>(cfg_.d1);
    GradSink l2sink{
        [&](EntityId x, std::span<const float> g) {
            auto& slot = g1.try_emplace(x, Tensor1(d1)).first->second;
            add_inplace(slot.span(), g);
        },
        [&](RelationId r, std::span<const float> g) {
            // r_in at layer 2 is W_r(1) r
            outer_accum(grads->params.layers[0].w_r, g, base.relation(r));
            if (!cfg_.freeze_base) {
                Tensor1 g_rel(static_cast<size_t>(base_dim_));
                matvec_transposed_into(params.layers[0].w_r, g, g_rel.span());
                add_inplace(grads->rel.row(r), g_rel.span());
                grads->rel_rows.push_back(r);
            }
        }};
    for (const auto& [e, g] : g2)
        layer_backward(1, e, l2traces.at(e), g.span(), params.layers[1],
                       grads->params.layers[1], train, l2sink);

    // layer-1 backward into the base tables
    GradSink l1sink{[&](EntityId x, std::span<const float> g) {
                        if (cfg_.freeze_base) return;
                        add_inplace(grads->ent.row(x), g);
                        grads->ent_rows.push_back(x);
                    },
                    [&](RelationId r, std::span<const float> g) {
                        if (cfg_.freeze_base) return;
                        add_inplace(grads->rel.row(r), g);
                        grads->rel_rows.push_back(r);
                    }};
    for (const auto& [e, g] : g1)
        layer_backward(0, e, l1traces.at(e), g.span(), params.layers[0],
                       grads->params.layers[0], train, l1sink);

    return loss;
}

double Aggregator::loss_and_grads(std::span<const std::pair<Triple, Triple>> pairs,
                                  const AggregatorParams& params, const EmbeddingTable& base,
                                  AggregatorGrads* grads) const {
    return pass(pairs, params, base, grads, nullptr, false, 0);
}

Aggregator::EpochSampling Aggregator::sample_epoch(int epoch) const {
    EpochSampling s;
    const size_t cap = static_cast<size_t>(cfg_.neighbor_cap);
    bool needed = false;
    for (size_t e = 0; e < kg_.entity_count() && !needed; ++e)
        needed = nbrs_.original[e].size() > cap || nbrs_.transformed[e].size() > cap;
    if (!needed) return s;

    s.active = true;
    s.orig.resize(kg_.entity_count());
    s.trans.resize(kg_.entity_count());
    auto draw = [&](size_t n, uint64_t seed, std::vector<uint32_t>& out) {
        out.resize(n);
        for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint32_t>(i);
        if (n <= cap) return;
        Rng rng(seed);
        for (size_t i = 0; i < cap; ++i) {
            const size_t j = i + rng.uniform_u32(static_cast<uint32_t>(n - i));
            std::swap(out[i], out[j]);
        }
        out.resize(cap);
    };
    for (size_t e = 0; e < kg_.entity_count(); ++e) {
        draw(nbrs_.original[e].size(), Rng::mix(cfg_.seed, 0x5A00 + epoch, 2 * e), s.orig[e]);
        draw(nbrs_.transformed[e].size(), Rng::mix(cfg_.seed, 0x5A00 + epoch, 2 * e + 1),
             s.trans[e]);
    }
    return s;
}

Aggregator::TrainResult Aggregator::train(AggregatorParams& params, EmbeddingTable& base) const {
    TrainResult result;
    if (kg_.triples().empty() || cfg_.epochs == 0) return result;

    AggregatorGrads grads = AggregatorGrads::like(cfg_, base_dim_, kg_.entity_count(),
                                                  kg_.relation_vocab_size());
    std::vector<Tensor2*> p_tensors, g_tensors;
    for_each_tensor(params, [&](const std::string&, Tensor2& t) { p_tensors.push_back(&t); });
    for_each_tensor(grads.params,
                    [&](const std::string&, Tensor2& t) { g_tensors.push_back(&t); });
    std::vector<AdamState> states(p_tensors.size());
    AdamState ent_state, rel_state;
    const AdamConfig adam{cfg_.lr};

    std::vector<size_t> order(kg_.triples().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::mix(cfg_.seed, 0xA66));

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        const EpochSampling sampling = sample_epoch(epoch);
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = shuffle_rng.uniform_u32(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        const size_t batch = std::max<size_t>(1, static_cast<size_t>(cfg_.batch_size));
        size_t batch_index = 0;
        for (size_t start = 0; start < order.size(); start += batch, ++batch_index) {
            const size_t end = std::min(order.size(), start + batch);
            std::vector<std::pair<Triple, Triple>> pairs;
            pairs.reserve((end - start) * static_cast<size_t>(cfg_.n_neg));
            for (size_t oi = start; oi < end; ++oi) {
                const Triple& pos = kg_.triples()[order[oi]];
                for (const Triple& neg : kg_.sample_negatives(
                         pos, cfg_.n_neg,
                         Rng::mix(cfg_.seed, 0x4E6 + epoch, order[oi])))
                    pairs.push_back({pos, neg});
            }

            grads.zero();
            const uint64_t drop_salt =
                Rng::mix(cfg_.seed, 0xD80 + epoch, batch_index);
            const double loss =
                pass(pairs, params, base, &grads, &sampling, true, drop_salt);
            if (!std::isfinite(loss))
                throw NumericError("aggregator: non-finite loss at epoch " +
                                   std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index));
            epoch_loss += loss;

            for (size_t i = 0; i < p_tensors.size(); ++i)
                adam_step(p_tensors[i]->span(), g_tensors[i]->span(), states[i], adam);
            if (!cfg_.freeze_base) {
                collect_sorted_unique(grads.ent_rows);
                collect_sorted_unique(grads.rel_rows);
                adam_step_rows(base.entity_emb, grads.ent, grads.ent_rows, ent_state, adam);
                adam_step_rows(base.relation_emb, grads.rel, grads.rel_rows, rel_state, adam);
            }
        }
        result.epoch_losses.push_back(epoch_loss);
        log_debug("aggregator epoch " + std::to_string(epoch) + " loss " +
                  format_double(epoch_loss));
    }
    return result;
}

} // namespace rmna

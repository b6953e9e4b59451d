#include "rmna/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "rmna/rng.hpp"
#include "rmna/util.hpp"

namespace rmna {

DecoderParams init_decoder(const Tensor2& entity_nei, const Tensor2& relation_nei,
                           const DecoderConfig& cfg) {
    if (cfg.n_kernels < 1) throw ConfigError("decoder needs at least one kernel");
    if (entity_nei.cols != relation_nei.cols)
        throw ConsistencyError("entity and relation embedding widths differ");
    DecoderParams p;
    p.entity_emb = entity_nei;
    p.relation_emb = relation_nei;
    p.kernels = glorot_init(static_cast<size_t>(cfg.n_kernels), 3, Rng::mix(cfg.seed, 0xC0));
    p.w_rl = glorot_init(1, static_cast<size_t>(cfg.n_kernels) * entity_nei.cols,
                         Rng::mix(cfg.seed, 0xC1));
    p.lambda = cfg.lambda;
    return p;
}

namespace {

// feature map phi[(m, i)] = ReLU(k_m . (h_i, r_i, t_i)); trailing preactivation
// copy kept for the backward pass
void feature_map(std::span<const float> h, std::span<const float> r, std::span<const float> t,
                 const Tensor2& kernels, std::vector<float>& pre, std::vector<float>& phi) {
    const size_t d = h.size();
    const size_t omega = kernels.rows;
    pre.resize(omega * d);
    phi.resize(omega * d);
    for (size_t m = 0; m < omega; ++m) {
        const float k0 = kernels.at(m, 0), k1 = kernels.at(m, 1), k2 = kernels.at(m, 2);
        for (size_t i = 0; i < d; ++i) {
            const float v = k0 * h[i] + k1 * r[i] + k2 * t[i];
            pre[m * d + i] = v;
            phi[m * d + i] = relu(v);
        }
    }
}

} // namespace

double convkb_energy(std::span<const float> h, std::span<const float> r,
                     std::span<const float> t, const DecoderParams& params) {
    if (h.size() != r.size() || h.size() != t.size())
        throw ShapeError("convkb_energy: dimension mismatch");
    if (params.w_rl.cols != params.kernels.rows * h.size())
        throw ShapeError("convkb_energy: scoring vector width mismatch");
    std::vector<float> pre, phi;
    feature_map(h, r, t, params.kernels, pre, phi);
    return dot(params.w_rl.row(0), phi);
}

double convkb_energy(const Triple& t, const DecoderParams& params) {
    return convkb_energy(params.entity_emb.row(t.head), params.relation_emb.row(t.rel),
                         params.entity_emb.row(t.tail), params);
}

namespace {

double w_rl_penalty(const DecoderParams& params) {
    double wn2 = 0.0;
    for (float v : params.w_rl.row(0)) wn2 += static_cast<double>(v) * v;
    return 0.5 * params.lambda * wn2;
}

} // namespace

double convkb_loss(std::span<const LabeledTriple> batch, const DecoderParams& params) {
    double loss = 0.0;
    for (const LabeledTriple& lt : batch)
        loss += softplus(convkb_energy(lt.triple, params) * lt.label);
    return loss + w_rl_penalty(params);
}

DecoderGrads DecoderGrads::like(const DecoderParams& p) {
    DecoderGrads g;
    g.entity_emb = Tensor2(p.entity_emb.rows, p.entity_emb.cols);
    g.relation_emb = Tensor2(p.relation_emb.rows, p.relation_emb.cols);
    g.kernels = Tensor2(p.kernels.rows, p.kernels.cols);
    g.w_rl = Tensor2(p.w_rl.rows, p.w_rl.cols);
    return g;
}

void DecoderGrads::zero() {
    for (uint32_t r : ent_rows)
        std::fill(entity_emb.row(r).begin(), entity_emb.row(r).end(), 0.0f);
    for (uint32_t r : rel_rows)
        std::fill(relation_emb.row(r).begin(), relation_emb.row(r).end(), 0.0f);
    ent_rows.clear();
    rel_rows.clear();
    kernels.zero();
    w_rl.zero();
}

double convkb_loss_and_grads(std::span<const LabeledTriple> batch, const DecoderParams& params,
                             DecoderGrads& grads, float dropout_p, uint64_t drop_seed,
                             bool train) {
    const size_t d = params.entity_emb.cols;
    const size_t omega = params.kernels.rows;
    double loss = 0.0;
    std::vector<float> pre, phi;
    std::vector<float> g_phi(omega * d);

    size_t item = 0;
    for (const LabeledTriple& lt : batch) {
        const auto h = params.entity_emb.row(lt.triple.head);
        const auto r = params.relation_emb.row(lt.triple.rel);
        const auto t = params.entity_emb.row(lt.triple.tail);
        feature_map(h, r, t, params.kernels, pre, phi);

        std::vector<uint8_t> mask;
        if (train && dropout_p > 0.0f) {
            Rng rng(Rng::mix(drop_seed, item));
            mask = dropout_mask(phi.size(), dropout_p, rng);
            apply_dropout(phi, mask, dropout_p);
        }
        ++item;

        const double energy = dot(params.w_rl.row(0), phi);
        const double ye = energy * lt.label;
        loss += softplus(ye);

        // d softplus(y*E)/dE = y * sigmoid(y*E)
        const float g_e = static_cast<float>(lt.label * sigmoid(ye));

        axpy(grads.w_rl.row(0), g_e, phi);
        for (size_t i = 0; i < g_phi.size(); ++i) g_phi[i] = g_e * params.w_rl.row(0)[i];
        if (!mask.empty()) apply_dropout(g_phi, mask, dropout_p);

        for (size_t m = 0; m < omega; ++m) {
            const float k0 = params.kernels.at(m, 0);
            const float k1 = params.kernels.at(m, 1);
            const float k2 = params.kernels.at(m, 2);
            double gk0 = 0.0, gk1 = 0.0, gk2 = 0.0;
            auto gh = grads.entity_emb.row(lt.triple.head);
            auto gr = grads.relation_emb.row(lt.triple.rel);
            auto gt = grads.entity_emb.row(lt.triple.tail);
            for (size_t i = 0; i < d; ++i) {
                const float gp = g_phi[m * d + i] * relu_grad(pre[m * d + i]);
                if (gp == 0.0f) continue;
                gk0 += static_cast<double>(gp) * h[i];
                gk1 += static_cast<double>(gp) * r[i];
                gk2 += static_cast<double>(gp) * t[i];
                gh[i] += gp * k0;
                gr[i] += gp * k1;
                gt[i] += gp * k2;
            }
            grads.kernels.at(m, 0) += static_cast<float>(gk0);
            grads.kernels.at(m, 1) += static_cast<float>(gk1);
            grads.kernels.at(m, 2) += static_cast<float>(gk2);
        }
        grads.ent_rows.push_back(lt.triple.head);
        grads.ent_rows.push_back(lt.triple.tail);
        grads.rel_rows.push_back(lt.triple.rel);
    }
    loss += w_rl_penalty(params);
    axpy(grads.w_rl.row(0), params.lambda, params.w_rl.row(0));
    return loss;
}

DecoderTrainResult train_decoder(const KnowledgeGraph& kg, const Tensor2& entity_nei,
                                 const Tensor2& relation_nei, const DecoderConfig& cfg) {
    if (entity_nei.rows < kg.entity_count() || relation_nei.rows < kg.relation_count())
        throw ConsistencyError("aggregated embeddings do not cover the graph vocabulary");
    DecoderTrainResult result{init_decoder(entity_nei, relation_nei, cfg), {}};
    DecoderParams& params = result.params;
    if (kg.triples().empty() || cfg.epochs == 0) return result;

    DecoderGrads grads = DecoderGrads::like(params);
    AdamState ent_state, rel_state, kernel_state, w_state;
    const AdamConfig adam{cfg.lr};

    std::vector<size_t> order(kg.triples().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xDEC));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = shuffle_rng.uniform_u32(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        const size_t batch = std::max<size_t>(1, static_cast<size_t>(cfg.batch_size));
        size_t batch_index = 0;
        for (size_t start = 0; start < order.size(); start += batch, ++batch_index) {
            const size_t end = std::min(order.size(), start + batch);
            std::vector<LabeledTriple> labeled;
            labeled.reserve((end - start) * static_cast<size_t>(1 + cfg.n_neg));
            for (size_t oi = start; oi < end; ++oi) {
                const Triple& pos = kg.triples()[order[oi]];
                labeled.push_back({pos, 1.0f});
                for (const Triple& neg : kg.sample_negatives(
                         pos, cfg.n_neg, Rng::mix(cfg.seed, 0xDE60 + epoch, order[oi])))
                    labeled.push_back({neg, -1.0f});
            }

            grads.zero();
            const double loss = convkb_loss_and_grads(
                labeled, params, grads, cfg.dropout,
                Rng::mix(cfg.seed, 0xDD00 + epoch, batch_index), true);
            if (!std::isfinite(loss))
                throw NumericError("decoder: non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batch_index));
            epoch_loss += loss;

            std::sort(grads.ent_rows.begin(), grads.ent_rows.end());
            grads.ent_rows.erase(std::unique(grads.ent_rows.begin(), grads.ent_rows.end()),
                                 grads.ent_rows.end());
            std::sort(grads.rel_rows.begin(), grads.rel_rows.end());
            grads.rel_rows.erase(std::unique(grads.rel_rows.begin(), grads.rel_rows.end()),
                                 grads.rel_rows.end());
            adam_step_rows(params.entity_emb, grads.entity_emb, grads.ent_rows, ent_state, adam);
            adam_step_rows(params.relation_emb, grads.relation_emb, grads.rel_rows, rel_state,
                           adam);
            adam_step(params.kernels.span(), grads.kernels.span(), kernel_state, adam);
            adam_step(params.w_rl.span(), grads.w_rl.span(), w_state, adam);
        }
        result.epoch_losses.push_back(epoch_loss);
        log_debug("decoder epoch " + std::to_string(epoch) + " loss " +
                  format_double(epoch_loss));
    }
    return result;
}

} // namespace rmna

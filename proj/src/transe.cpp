#include "rmna/transe.hpp"

#include <algorithm>
#include <cmath>

#include "rmna/evaluator.hpp"
#include "rmna/rng.hpp"
#include "rmna/util.hpp"

namespace rmna {

Norm parse_norm(const std::string& s) {
    if (s == "l1" || s == "L1") return Norm::L1;
    if (s == "l2" || s == "L2") return Norm::L2;
    throw ConfigError("unknown norm '" + s + "' (expected l1|l2)");
}

std::string norm_name(Norm n) { return n == Norm::L1 ? "l1" : "l2"; }

double transe_energy(std::span<const float> h, std::span<const float> r,
                     std::span<const float> t, Norm norm) {
    if (h.size() != r.size() || h.size() != t.size())
        throw ShapeError("transe_energy: dimension mismatch");
    double acc = 0.0;
    if (norm == Norm::L1) {
        for (size_t i = 0; i < h.size(); ++i)
            acc += std::fabs(static_cast<double>(h[i]) + r[i] - t[i]);
    } else {
        for (size_t i = 0; i < h.size(); ++i) {
            const double d = static_cast<double>(h[i]) + r[i] - t[i];
            acc += d * d;
        }
        acc = std::sqrt(acc);
    }
    return acc;
}

double margin_loss(double pos_energy, double neg_energy, float margin) {
    return std::max(0.0, margin + pos_energy - neg_energy);
}

double margin_loss(std::span<const double> pos_energies, std::span<const double> neg_energies,
                   float margin) {
    if (pos_energies.size() != neg_energies.size())
        throw ShapeError("margin_loss: batch size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < pos_energies.size(); ++i)
        acc += margin_loss(pos_energies[i], neg_energies[i], margin);
    return acc;
}

EmbeddingTable init_embeddings(const KnowledgeGraph& kg, int dim, uint64_t seed) {
    if (dim <= 0) throw StateError("embedding dimension must be positive");
    const float bound = 6.0f / std::sqrt(static_cast<float>(dim));
    EmbeddingTable table;
    table.dim = dim;
    table.entity_emb = kg.entity_count() == 0
                           ? Tensor2(0, static_cast<size_t>(dim))
                           : uniform_init(kg.entity_count(), static_cast<size_t>(dim), -bound,
                                          bound, Rng::mix(seed, 1));
    table.relation_emb = uniform_init(kg.relation_vocab_size(), static_cast<size_t>(dim), -bound,
                                      bound, Rng::mix(seed, 2));
    return table;
}

namespace {

// d||h + r - t|| / d(h+r-t), written into diff
void energy_gradient(std::span<const float> h, std::span<const float> r,
                     std::span<const float> t, Norm norm, std::span<float> diff) {
    for (size_t i = 0; i < h.size(); ++i) diff[i] = h[i] + r[i] - t[i];
    if (norm == Norm::L1) {
        for (float& d : diff) d = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
    } else {
        double nrm = 0.0;
        for (float d : diff) nrm += static_cast<double>(d) * d;
        nrm = std::sqrt(std::max(nrm, 1e-12));
        for (float& d : diff) d = static_cast<float>(d / nrm);
    }
}

void renormalize_entities(Tensor2& emb) {
    for (size_t r = 0; r < emb.rows; ++r) {
        auto row = emb.row(r);
        const double nrm = l2_norm(row);
        if (nrm > 1e-12) {
            const float inv = static_cast<float>(1.0 / nrm);
            for (float& v : row) v *= inv;
        }
    }
}

} // namespace

PretrainResult pretrain(const KnowledgeGraph& kg, const PretrainConfig& cfg,
                        std::span<const Triple> valid) {
    PretrainResult result;
    result.table = init_embeddings(kg, cfg.dim, cfg.seed);
    EmbeddingTable& table = result.table;
    if (kg.triples().empty() || cfg.epochs == 0) return result;

    const size_t dim = static_cast<size_t>(cfg.dim);
    Tensor2 ent_grad(table.entity_emb.rows, dim);
    Tensor2 rel_grad(table.relation_emb.rows, dim);
    AdamState ent_state, rel_state;
    AdamConfig adam{cfg.lr};
    std::vector<float> diff(dim);

    std::vector<size_t> order(kg.triples().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto validation_mrr = [&]() {
        Scorer scorer = [&](EntityId h, RelationId r, EntityId t) {
            return transe_energy(table.entity(h), table.relation(r), table.entity(t), cfg.norm);
        };
        return evaluate(scorer, valid, kg.entity_count(), {}, RankMode::Raw).mrr;
    };

    double best_mrr = -1.0;
    int best_epoch = 0;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xAB));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        renormalize_entities(table.entity_emb);
        // Fisher-Yates with the run-local stream
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = shuffle_rng.uniform_u32(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        const size_t batch = std::max<size_t>(1, static_cast<size_t>(cfg.batch_size));
        for (size_t start = 0; start < order.size(); start += batch) {
            const size_t end = std::min(order.size(), start + batch);
            std::vector<uint32_t> ent_rows, rel_rows;

            for (size_t oi = start; oi < end; ++oi) {
                const size_t ti = order[oi];
                const Triple& pos = kg.triples()[ti];
                const auto negatives = kg.sample_negatives(
                    pos, cfg.n_neg, Rng::mix(cfg.seed, static_cast<uint64_t>(epoch), ti));
                const double pos_e = transe_energy(table.entity(pos.head),
                                                   table.relation(pos.rel),
                                                   table.entity(pos.tail), cfg.norm);
                for (const Triple& neg : negatives) {
                    const double neg_e = transe_energy(table.entity(neg.head),
                                                       table.relation(neg.rel),
                                                       table.entity(neg.tail), cfg.norm);
                    const double slack = cfg.margin + pos_e - neg_e;
                    if (slack <= 0.0) continue;
                    epoch_loss += slack;

                    energy_gradient(table.entity(pos.head), table.relation(pos.rel),
                                    table.entity(pos.tail), cfg.norm, diff);
                    add_inplace(ent_grad.row(pos.head), diff);
                    add_inplace(rel_grad.row(pos.rel), diff);
                    axpy(ent_grad.row(pos.tail), -1.0f, diff);
                    ent_rows.push_back(pos.head);
                    ent_rows.push_back(pos.tail);
                    rel_rows.push_back(pos.rel);

                    energy_gradient(table.entity(neg.head), table.relation(neg.rel),
                                    table.entity(neg.tail), cfg.norm, diff);
                    axpy(ent_grad.row(neg.head), -1.0f, diff);
                    axpy(rel_grad.row(neg.rel), -1.0f, diff);
                    add_inplace(ent_grad.row(neg.tail), diff);
                    ent_rows.push_back(neg.head);
                    ent_rows.push_back(neg.tail);
                    rel_rows.push_back(neg.rel);
                }
            }

            std::sort(ent_rows.begin(), ent_rows.end());
            ent_rows.erase(std::unique(ent_rows.begin(), ent_rows.end()), ent_rows.end());
            std::sort(rel_rows.begin(), rel_rows.end());
            rel_rows.erase(std::unique(rel_rows.begin(), rel_rows.end()), rel_rows.end());
            adam_step_rows(table.entity_emb, ent_grad, ent_rows, ent_state, adam);
            adam_step_rows(table.relation_emb, rel_grad, rel_rows, rel_state, adam);
            // grad buffers stay allocated; only touched rows need clearing
            for (uint32_t r : ent_rows) std::fill(ent_grad.row(r).begin(), ent_grad.row(r).end(), 0.0f);
            for (uint32_t r : rel_rows) std::fill(rel_grad.row(r).begin(), rel_grad.row(r).end(), 0.0f);
        }

        if (!std::isfinite(epoch_loss))
            throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
        result.epoch_losses.push_back(epoch_loss);
        result.epochs_run = epoch + 1;

        if (!valid.empty() && cfg.val_every > 0 && (epoch + 1) % cfg.val_every == 0) {
            const double mrr = validation_mrr();
            log_debug("pretrain epoch " + std::to_string(epoch) + " loss " +
                      format_double(epoch_loss) + " valid mrr " + format_double(mrr));
            if (mrr > best_mrr) {
                best_mrr = mrr;
                best_epoch = epoch;
            } else if (epoch - best_epoch >= cfg.patience) {
                log_info("pretrain: early stop at epoch " + std::to_string(epoch) +
                         " (best valid mrr " + format_double(best_mrr) + ")");
                break;
            }
        }
    }
    return result;
}

} // namespace rmna

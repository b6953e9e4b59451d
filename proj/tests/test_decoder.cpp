#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rmna/decoder.hpp"
#include "rmna/rng.hpp"

using namespace rmna;

namespace {

DecoderParams tiny_params(int dim, int kernels, uint64_t seed) {
    DecoderConfig cfg;
    cfg.n_kernels = kernels;
    cfg.seed = seed;
    const Tensor2 ents = glorot_init(4, static_cast<size_t>(dim), Rng::mix(seed, 1));
    const Tensor2 rels = glorot_init(2, static_cast<size_t>(dim), Rng::mix(seed, 2));
    return init_decoder(ents, rels, cfg);
}

} // namespace

TEST_CASE("convolution energy hand example") {
    DecoderParams p;
    p.entity_emb = Tensor2(1, 2);
    p.relation_emb = Tensor2(1, 2);
    p.kernels = Tensor2(1, 3, 1.0f); // single (1,1,1) kernel
    p.w_rl = Tensor2(1, 2, 1.0f);
    const Tensor1 h{1.0f, 0.0f};
    // rows (1,1,1) and (0,0,0) -> feature map (3, 0) -> dot (1,1) = 3
    CHECK(convkb_energy(h.span(), h.span(), h.span(), p) == doctest::Approx(3.0));

    // all-zero kernels score zero everywhere
    p.kernels.zero();
    CHECK(convkb_energy(h.span(), h.span(), h.span(), p) == doctest::Approx(0.0));

    CHECK_THROWS_AS(convkb_energy(h.span(), h.span(), Tensor1(3).span(), p), ShapeError);
}

TEST_CASE("kernels are 1x3") {
    const auto p = tiny_params(6, 4, 9);
    CHECK(p.kernels.rows == 4);
    CHECK(p.kernels.cols == 3);
    CHECK(p.w_rl.cols == 4 * 6);
}

TEST_CASE("energy is linear in the scoring vector") {
    auto p = tiny_params(5, 3, 2);
    const Tensor1 h = Tensor1{0.1f, -0.2f, 0.3f, 0.4f, -0.5f};
    const Tensor1 r = Tensor1{0.5f, 0.1f, -0.3f, 0.2f, 0.0f};
    const Tensor1 t = Tensor1{-0.1f, 0.2f, 0.1f, -0.4f, 0.3f};
    const double base = convkb_energy(h.span(), r.span(), t.span(), p);
    for (float& v : p.w_rl.v) v *= 3.0f;
    const double scaled = convkb_energy(h.span(), r.span(), t.span(), p);
    CHECK(scaled == doctest::Approx(3.0 * base).epsilon(1e-5));
}

TEST_CASE("logistic loss hand values and stability") {
    auto p = tiny_params(2, 1, 3);
    p.lambda = 0.0f;
    p.kernels.zero(); // every energy is exactly zero
    const LabeledTriple pos{{0, 0, 1}, 1.0f};
    const LabeledTriple neg{{0, 0, 1}, -1.0f};
    CHECK(convkb_loss(std::vector<LabeledTriple>{pos}, p) == doctest::Approx(std::log(2.0)));
    CHECK(convkb_loss(std::vector<LabeledTriple>{neg}, p) == doctest::Approx(std::log(2.0)));

    // E = -10, y = +1  ->  log(1 + e^-10)
    CHECK(softplus(-10.0) == doctest::Approx(4.5399e-5).epsilon(1e-3));
    // extreme energies stay finite through the softplus identity
    CHECK(std::isfinite(softplus(1e4)));
    CHECK(std::isfinite(softplus(-1e4)));
    CHECK(softplus(1e4) == doctest::Approx(1e4));
}

TEST_CASE("regularization enters the loss through lambda") {
    auto p = tiny_params(2, 1, 3);
    p.kernels.zero();
    p.w_rl.v = {3.0f, 4.0f}; // ||w||^2 = 25
    p.lambda = 0.1f;
    const LabeledTriple pos{{0, 0, 1}, 1.0f};
    CHECK(convkb_loss(std::vector<LabeledTriple>{pos}, p) ==
          doctest::Approx(std::log(2.0) + 0.5 * 0.1 * 25.0));
}

TEST_CASE("decoder gradients pass the finite-difference check") {
    auto p = tiny_params(5, 3, 12);
    const std::vector<LabeledTriple> batch{
        {{0, 0, 1}, 1.0f}, {{1, 1, 2}, 1.0f}, {{2, 0, 3}, -1.0f}, {{3, 1, 0}, -1.0f},
    };

    // ReLU kinks: keep every preactivation away from zero at the 1e-4 step
    {
        std::vector<float> pre, phi;
        for (const LabeledTriple& lt : batch) {
            const auto h = p.entity_emb.row(lt.triple.head);
            const auto r = p.relation_emb.row(lt.triple.rel);
            const auto t = p.entity_emb.row(lt.triple.tail);
            for (size_t m = 0; m < p.kernels.rows; ++m)
                for (size_t i = 0; i < 5; ++i) {
                    const double v = p.kernels.at(m, 0) * h[i] + p.kernels.at(m, 1) * r[i] +
                                     p.kernels.at(m, 2) * t[i];
                    REQUIRE(std::fabs(v) > 2e-3);
                }
        }
    }

    DecoderGrads grads = DecoderGrads::like(p);
    convkb_loss_and_grads(batch, p, grads, 0.0f, 0, false);
    auto loss_fn = [&]() { return convkb_loss(batch, p); };

    CHECK(grad_check(loss_fn, p.kernels.span(), grads.kernels.span()) < 1e-3);
    CHECK(grad_check(loss_fn, p.w_rl.span(), grads.w_rl.span()) < 1e-3);
    CHECK(grad_check(loss_fn, p.entity_emb.span(), grads.entity_emb.span()) < 1e-3);
    CHECK(grad_check(loss_fn, p.relation_emb.span(), grads.relation_emb.span()) < 1e-3);
}

TEST_CASE("training with zero epochs returns the initialization") {
    const auto kg = oracle::random_graph(6, 8, 2, 16);
    const Tensor2 ents = glorot_init(kg.entity_count(), 6, 1);
    const Tensor2 rels = glorot_init(kg.relation_count(), 6, 2);
    DecoderConfig cfg;
    cfg.n_kernels = 4;
    cfg.epochs = 0;
    cfg.seed = 44;
    const auto result = train_decoder(kg, ents, rels, cfg);
    const auto init = init_decoder(ents, rels, cfg);
    CHECK(result.params.kernels.v == init.kernels.v);
    CHECK(result.params.w_rl.v == init.w_rl.v);
    CHECK(result.params.entity_emb.v == init.entity_emb.v);
}

TEST_CASE("training pushes real triples below sampled corruptions") {
    const auto kg = oracle::random_graph(15, 20, 3, 60);
    const Tensor2 ents = glorot_init(kg.entity_count(), 8, 5);
    const Tensor2 rels = glorot_init(kg.relation_count(), 8, 6);
    DecoderConfig cfg;
    cfg.n_kernels = 6;
    cfg.epochs = 100;
    cfg.batch_size = 16;
    cfg.dropout = 0.0f;
    cfg.seed = 8;
    const auto result = train_decoder(kg, ents, rels, cfg);

    double pos_mean = 0.0;
    for (const Triple& t : kg.triples()) pos_mean += convkb_energy(t, result.params);
    pos_mean /= static_cast<double>(kg.triples().size());

    double neg_mean = 0.0;
    int count = 0;
    for (const Triple& t : kg.triples())
        for (const Triple& neg : kg.sample_negatives(t, 2, 500 + count)) {
            neg_mean += convkb_energy(neg, result.params);
            ++count;
        }
    neg_mean /= count;
    CHECK(pos_mean < neg_mean);
}

TEST_CASE("decoder training is deterministic per seed") {
    const auto kg = oracle::random_graph(25, 10, 2, 24);
    const Tensor2 ents = glorot_init(kg.entity_count(), 4, 1);
    const Tensor2 rels = glorot_init(kg.relation_count(), 4, 2);
    DecoderConfig cfg;
    cfg.n_kernels = 3;
    cfg.epochs = 4;
    cfg.seed = 10;
    const auto a = train_decoder(kg, ents, rels, cfg);
    const auto b = train_decoder(kg, ents, rels, cfg);
    CHECK(a.params.kernels.v == b.params.kernels.v);
    CHECK(a.params.entity_emb.v == b.params.entity_emb.v);
    CHECK(a.epoch_losses == b.epoch_losses);
}

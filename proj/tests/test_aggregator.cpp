#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rmna/aggregator.hpp"
#include "rmna/rules.hpp"

using namespace rmna;

namespace {

// Five entities, two relations, a couple of transformed neighbors: the
// smallest graph that exercises every code path of the model.
struct ToySetup {
    KnowledgeGraph kg;
    NeighborSets neighbors;
    AggregatorConfig cfg;
    EmbeddingTable base;
    AggregatorParams params;

    ToySetup()
        : kg(make_kg()),
          neighbors(NeighborSets::build(kg, make_transformed())),
          cfg(make_cfg()),
          base(init_embeddings(kg, 4, 31)),
          params(AggregatorParams::init(cfg, 4, 17)) {}

    static KnowledgeGraph make_kg() {
        Vocab ents, rels;
        for (const char* e : {"a", "b", "c", "d", "e"}) ents.intern(e);
        for (const char* r : {"p", "q"}) rels.intern(r);
        std::vector<Triple> triples{
            {0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {0, 1, 3}, {4, 0, 0},
        };
        return KnowledgeGraph(std::move(ents), std::move(rels), std::move(triples));
    }

    static std::vector<std::vector<TransformedNeighbor>> make_transformed() {
        std::vector<std::vector<TransformedNeighbor>> t(5);
        t[0].push_back({1, 2, 0.8f, 0.7f, 0.5f, 0.3f});
        t[0].push_back({0, 4, 0.6f, 0.9f, 1.0f, 0.1f});
        t[2].push_back({1, 4, 0.5f, 0.5f, 0.5f, 0.9f});
        return t;
    }

    static AggregatorConfig make_cfg() {
        AggregatorConfig cfg;
        cfg.d1 = 5;
        cfg.d2 = 6;
        cfg.d_q1 = cfg.d_k1 = 3;
        cfg.d_q2 = cfg.d_k2 = 3;
        cfg.d_v1 = 3;
        cfg.d_v2 = 3;
        cfg.k_m = 2;
        cfg.k_s = 2;
        cfg.margin = 2.0f;
        cfg.dropout = 0.0f;
        cfg.seed = 5;
        return cfg;
    }
};

} // namespace

TEST_CASE("parameter shapes follow the dimension chain") {
    AggregatorConfig cfg; // defaults carry the published FB15K-237 dimensions
    const auto params = AggregatorParams::init(cfg, 100, 1);
    CHECK(params.layers[0].w_c_o.rows == 100);
    CHECK(params.layers[0].w_c_o.cols == 300);
    CHECK(params.layers[0].w_c_t.cols == 304); // 3d + 4 metadata scalars
    CHECK(params.layers[0].w_f.cols == 400);   // 2 * k_m * d_v * k_s = 2*2*25*4
    CHECK(params.layers[1].w_c_o.rows == 200);
    CHECK(params.layers[1].w_c_o.cols == 300);
    CHECK(params.layers[1].w_f.cols == 800);
    CHECK(params.layers[0].w_r.rows == 100);
    CHECK(params.layers[1].w_r.rows == 200);
    CHECK(params.layers[1].w_r.cols == 100);

    AggregatorConfig bad = cfg;
    bad.d_k1 = 7;
    CHECK_THROWS_AS(AggregatorParams::init(bad, 100, 1), ConfigError);
}

TEST_CASE("feature masks shrink the transformed width by exactly one") {
    const int d_in = 10;
    AggregatorConfig cfg = ToySetup::make_cfg();
    const int full = 3 * d_in + 4;
    for (const char* name : {"nh", "nc", "nl", "ns"}) {
        cfg.mask = FeatureMask::from_ablation(name);
        CHECK(cfg.mask.active() == 3);
        const auto p = AggregatorParams::init(cfg, d_in, 1);
        CHECK(static_cast<int>(p.layers[0].w_c_t.cols) == full - 1);
    }
    cfg.mask = FeatureMask{false, false, false, false};
    const auto p = AggregatorParams::init(cfg, d_in, 1);
    CHECK(static_cast<int>(p.layers[0].w_c_t.cols) == 3 * d_in);
    CHECK_THROWS_AS(FeatureMask::from_ablation("bogus"), ConfigError);

    // each named ablation disables its own scalar
    CHECK(!FeatureMask::from_ablation("nh").use_hc);
    CHECK(!FeatureMask::from_ablation("nc").use_conf);
    CHECK(!FeatureMask::from_ablation("nl").use_lnorm);
    CHECK(!FeatureMask::from_ablation("ns").use_s);
}

TEST_CASE("input construction is the masked concatenation under W_c") {
    const Tensor1 e{1.0f, 2.0f}, r{3.0f, 4.0f}, t{5.0f, 6.0f};
    Tensor2 w(2, 6);
    for (size_t i = 0; i < w.v.size(); ++i) w.v[i] = static_cast<float>(i % 3) - 1.0f;
    const auto c = build_original_input(w, e.span(), r.span(), t.span());
    CHECK(c.size() == 2);

    Tensor2 zero(3, 6);
    const auto z = build_original_input(zero, e.span(), r.span(), t.span());
    for (float v : z.v) CHECK(v == 0.0f);

    const TransformedNeighbor tn{0, 0, 0.1f, 0.2f, 0.3f, 0.4f};
    Tensor2 w_t(1, 10, 1.0f); // sums its input
    FeatureMask full;
    const auto ct = build_transformed_input(w_t, e.span(), r.span(), t.span(), tn, full);
    CHECK(ct[0] == doctest::Approx(1 + 2 + 3 + 4 + 5 + 6 + 0.1 + 0.2 + 0.3 + 0.4));

    FeatureMask no_s = FeatureMask::from_ablation("ns");
    Tensor2 w_t3(1, 9, 1.0f);
    const auto ct3 = build_transformed_input(w_t3, e.span(), r.span(), t.span(), tn, no_s);
    CHECK(ct3[0] == doctest::Approx(21.0 + 0.1 + 0.2 + 0.3));
}

TEST_CASE("neighbor attention normalizes within the type") {
    // equal inputs split the weight evenly
    std::vector<Tensor1> inputs{Tensor1{1.0f, 2.0f}, Tensor1{1.0f, 2.0f}};
    Tensor2 w_b(1, 2);
    w_b.at(0, 0) = 0.4f;
    w_b.at(0, 1) = -0.3f;
    auto weights = neighbor_attention(w_b, inputs, 0.2f);
    CHECK(weights[0] == doctest::Approx(0.5));
    CHECK(weights[1] == doctest::Approx(0.5));

    // zero scoring vector gives uniform weights over any set
    Tensor2 zero(1, 2);
    std::vector<Tensor1> varied{Tensor1{5.0f, -1.0f}, Tensor1{0.0f, 2.0f}, Tensor1{1.0f, 1.0f}};
    auto uniform = neighbor_attention(zero, varied, 0.2f);
    for (float v : uniform) CHECK(v == doctest::Approx(1.0 / 3.0));

    // logits (0, ln 3) -> (0.25, 0.75)
    Tensor2 ident(1, 1);
    ident.at(0, 0) = 1.0f;
    std::vector<Tensor1> scalars{Tensor1{0.0f}, Tensor1{std::log(3.0f)}};
    auto skewed = neighbor_attention(ident, scalars, 0.2f);
    CHECK(skewed[0] == doctest::Approx(0.25).epsilon(1e-5));
    CHECK(skewed[1] == doctest::Approx(0.75).epsilon(1e-5));

    CHECK_THROWS_AS(neighbor_attention(zero, {}, 0.2f), StateError);
}

TEST_CASE("head aggregation applies ELU to the weighted sum") {
    // one-hot weights reduce to ELU of that input
    std::vector<Tensor1> inputs{Tensor1{2.0f, -1.0f}, Tensor1{-3.0f, 0.5f}};
    const std::vector<float> one_hot{0.0f, 1.0f};
    const auto picked = aggregate_head(inputs, one_hot, 2);
    CHECK(picked[0] == doctest::Approx(std::expm1(-3.0)));
    CHECK(picked[1] == doctest::Approx(0.5));

    // (1,-2) and (3,0) averaged -> ELU((2,-1)) = (2, e^-1 - 1)
    std::vector<Tensor1> pair{Tensor1{1.0f, -2.0f}, Tensor1{3.0f, 0.0f}};
    const std::vector<float> half{0.5f, 0.5f};
    const auto avg = aggregate_head(pair, half, 2);
    CHECK(avg[0] == doctest::Approx(2.0));
    CHECK(avg[1] == doctest::Approx(std::exp(-1.0) - 1.0));

    // the empty transformed set contributes a zero hidden vector
    const auto empty = aggregate_head({}, {}, 3);
    for (float v : empty.v) CHECK(v == 0.0f);
}

TEST_CASE("zero queries make self-attention average the values") {
    Tensor2 X(4, 3);
    for (size_t i = 0; i < X.v.size(); ++i) X.v[i] = static_cast<float>(i) * 0.25f - 1.0f;
    Tensor2 w_q(3, 2); // zeros
    Tensor2 w_k = glorot_init(3, 2, 3);
    Tensor2 w_v = glorot_init(3, 2, 4);
    const Tensor2 Z = self_attention_head(X, w_q, w_k, w_v);
    const Tensor2 V = matmul(X, w_v);
    for (size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (size_t r = 0; r < 4; ++r) mean += V.at(r, c);
        mean /= 4.0;
        for (size_t r = 0; r < 4; ++r) CHECK(Z.at(r, c) == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("aggregation energy hand values") {
    const Tensor1 h{1.0f, 1.0f}, r{0.0f, 1.0f}, t{1.0f, 2.0f};
    CHECK(na_energy(h.span(), r.span(), t.span(), Norm::L1) == doctest::Approx(0.0));
    const Tensor1 zero{0.0f, 0.0f};
    CHECK(na_energy(h.span(), r.span(), zero.span(), Norm::L1) == doctest::Approx(4.0));
    CHECK(na_energy(h.span(), zero.span(), h.span(), Norm::L1) == doctest::Approx(0.0));
}

TEST_CASE("attention weights sum to one for every entity, layer, and head") {
    ToySetup toy;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);
    for (EntityId e = 0; e < 5; ++e) {
        const auto [l1, l2] = model.forward_trace(e, toy.params, toy.base);
        for (const LayerTrace* t : {&l1, &l2}) {
            for (int k = 0; k < toy.cfg.k_m; ++k) {
                double sum_o = 0.0;
                for (float a : t->alpha_o[k]) sum_o += a;
                CHECK(sum_o == doctest::Approx(1.0).epsilon(1e-6));
                if (!t->alpha_t[k].empty()) {
                    double sum_t = 0.0;
                    for (float a : t->alpha_t[k]) sum_t += a;
                    CHECK(sum_t == doctest::Approx(1.0).epsilon(1e-6));
                }
            }
            // self-attention rows are distributions too
            for (const Tensor2& A : t->A)
                for (size_t r = 0; r < A.rows; ++r) {
                    double s = 0.0;
                    for (size_t c = 0; c < A.cols; ++c) s += A.at(r, c);
                    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
                }
        }
    }
}

TEST_CASE("forward is deterministic and neighbor-order invariant") {
    ToySetup toy;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);
    const Tensor1 first = model.embed(0, toy.params, toy.base);
    const Tensor1 second = model.embed(0, toy.params, toy.base);
    CHECK(first.v == second.v); // bitwise repeatable in eval mode

    // permute the stored neighbor lists; outputs agree within 1e-5
    NeighborSets shuffled = toy.neighbors;
    std::reverse(shuffled.original[0].begin(), shuffled.original[0].end());
    std::reverse(shuffled.transformed[0].begin(), shuffled.transformed[0].end());
    std::rotate(shuffled.original[2].begin(), shuffled.original[2].begin() + 1,
                shuffled.original[2].end());
    const Aggregator permuted(toy.kg, shuffled, toy.cfg, 4);
    const Tensor1 third = permuted.embed(0, toy.params, toy.base);
    REQUIRE(third.size() == first.size());
    for (size_t i = 0; i < first.size(); ++i)
        CHECK(std::fabs(first[i] - third[i]) < 1e-5);
}

TEST_CASE("isolated entities aggregate through the self-loop alone") {
    Vocab ents, rels;
    ents.intern("lonely");
    rels.intern("r");
    const KnowledgeGraph kg(std::move(ents), std::move(rels), {});
    const auto neighbors = NeighborSets::originals_only(kg);
    AggregatorConfig cfg = ToySetup::make_cfg();
    const Aggregator model(kg, neighbors, cfg, 4);
    const auto base = init_embeddings(kg, 4, 2);
    const auto params = AggregatorParams::init(cfg, 4, 3);
    const Tensor1 out = model.embed(0, params, base);
    CHECK(out.size() == 6);
    ensure_finite(out.span(), "isolated embed");
    CHECK(out.v == model.embed(0, params, base).v);
}

TEST_CASE("materialized embeddings match per-entity forwards") {
    ToySetup toy;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);
    const auto [e_nei, r_nei] = model.materialize(toy.params, toy.base);
    CHECK(e_nei.rows == 5);
    CHECK(e_nei.cols == 6);
    CHECK(r_nei.rows == toy.kg.relation_count());
    for (EntityId e = 0; e < 5; ++e) {
        const Tensor1 direct = model.embed(e, toy.params, toy.base);
        for (size_t i = 0; i < direct.size(); ++i) CHECK(direct[i] == e_nei.at(e, i));
    }
    // relation rows are W_r(2) transforms of the base relations
    for (RelationId r = 0; r < toy.kg.relation_count(); ++r) {
        const Tensor1 expect = matvec(toy.params.layers[1].w_r, toy.base.relation(r));
        for (size_t i = 0; i < expect.size(); ++i) CHECK(expect[i] == r_nei.at(r, i));
    }
}

TEST_CASE("full analytic gradient agrees with finite differences") {
    ToySetup toy;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);

    std::vector<std::pair<Triple, Triple>> pairs;
    for (size_t i = 0; i < toy.kg.triples().size(); ++i) {
        const Triple& pos = toy.kg.triples()[i];
        pairs.push_back({pos, toy.kg.sample_negatives(pos, 1, 900 + i)[0]});
    }

    AggregatorGrads grads = AggregatorGrads::like(toy.cfg, 4, 5, toy.kg.relation_vocab_size());
    const double loss = model.loss_and_grads(pairs, toy.params, toy.base, &grads);
    CHECK(loss > 0.0);

    auto loss_fn = [&]() { return model.loss_and_grads(pairs, toy.params, toy.base, nullptr); };

    // every parameter tensor, a handful of coordinates each
    size_t coords_checked = 0;
    double worst = 0.0;
    std::string worst_name;
    std::vector<Tensor2*> p_list, g_list;
    std::vector<std::string> names;
    for_each_tensor(const_cast<AggregatorParams&>(toy.params),
                    [&](const std::string& n, Tensor2& t) {
                        p_list.push_back(&t);
                        names.push_back(n);
                    });
    for_each_tensor(grads.params, [&](const std::string&, Tensor2& t) { g_list.push_back(&t); });
    Rng pick(99);
    for (size_t ti = 0; ti < p_list.size(); ++ti) {
        std::vector<size_t> idx;
        const size_t n = p_list[ti]->size();
        for (int k = 0; k < 3; ++k) idx.push_back(pick.uniform_u32(static_cast<uint32_t>(n)));
        const double err =
            grad_check_at(loss_fn, p_list[ti]->span(), g_list[ti]->span(), idx);
        coords_checked += idx.size();
        if (err > worst) {
            worst = err;
            worst_name = names[ti];
        }
    }
    // base embeddings flow through both layers and the energy
    {
        std::vector<size_t> idx;
        Rng pe(123);
        for (int k = 0; k < 10; ++k)
            idx.push_back(pe.uniform_u32(static_cast<uint32_t>(toy.base.entity_emb.size())));
        const double err = grad_check_at(loss_fn, const_cast<EmbeddingTable&>(toy.base)
                                                       .entity_emb.span(),
                                         grads.ent.span(), idx);
        coords_checked += idx.size();
        if (err > worst) {
            worst = err;
            worst_name = "entity_emb";
        }
        std::vector<size_t> ridx;
        for (int k = 0; k < 8; ++k)
            ridx.push_back(pe.uniform_u32(static_cast<uint32_t>(toy.base.relation_emb.size())));
        const double rerr = grad_check_at(loss_fn, const_cast<EmbeddingTable&>(toy.base)
                                                        .relation_emb.span(),
                                          grads.rel.span(), ridx);
        coords_checked += ridx.size();
        if (rerr > worst) {
            worst = rerr;
            worst_name = "relation_emb";
        }
    }
    CHECK(coords_checked >= 50);
    INFO("worst tensor: ", worst_name);
    CHECK(worst < 1e-3);
}

TEST_CASE("frozen base embeddings receive no gradient") {
    ToySetup toy;
    toy.cfg.freeze_base = true;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);
    std::vector<std::pair<Triple, Triple>> pairs{
        {toy.kg.triples()[0], toy.kg.sample_negatives(toy.kg.triples()[0], 1, 5)[0]}};
    AggregatorGrads grads = AggregatorGrads::like(toy.cfg, 4, 5, toy.kg.relation_vocab_size());
    model.loss_and_grads(pairs, toy.params, toy.base, &grads);
    CHECK(grads.ent_rows.empty());
    CHECK(grads.rel_rows.empty());
    for (float v : grads.ent.v) CHECK(v == 0.0f);
}

TEST_CASE("training reduces the loss on a small graph and respects zero epochs") {
    const auto planted = oracle::planted_rule_graph(8, 30, 0.9, 0.0);
    Vocab ents, rels;
    for (int i = 0; i < planted.n_entities; ++i) ents.intern("e" + std::to_string(i));
    for (const char* r : {"r0", "r1", "r2"}) rels.intern(r);
    const KnowledgeGraph kg(std::move(ents), std::move(rels), planted.train);
    const auto neighbors = NeighborSets::originals_only(kg);

    AggregatorConfig cfg = ToySetup::make_cfg();
    cfg.epochs = 0;
    cfg.seed = 3;
    const Aggregator model(kg, neighbors, cfg, 4);
    EmbeddingTable base = init_embeddings(kg, 4, 9);
    auto params = AggregatorParams::init(cfg, 4, 11);
    const auto before = params.layers[0].w_c_o.v;
    const auto none = model.train(params, base);
    CHECK(none.epoch_losses.empty());
    CHECK(params.layers[0].w_c_o.v == before);

    cfg.epochs = 25;
    cfg.batch_size = 16;
    cfg.lr = 0.005f;
    const Aggregator trainer(kg, neighbors, cfg, 4);
    const auto result = trainer.train(params, base);
    REQUIRE(result.epoch_losses.size() == 25);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("training is deterministic per seed") {
    ToySetup toy;
    toy.cfg.epochs = 3;
    toy.cfg.batch_size = 4;
    toy.cfg.dropout = 0.2f;
    const Aggregator model(toy.kg, toy.neighbors, toy.cfg, 4);

    EmbeddingTable base1 = toy.base;
    auto params1 = AggregatorParams::init(toy.cfg, 4, 17);
    const auto r1 = model.train(params1, base1);

    EmbeddingTable base2 = toy.base;
    auto params2 = AggregatorParams::init(toy.cfg, 4, 17);
    const auto r2 = model.train(params2, base2);

    CHECK(r1.epoch_losses == r2.epoch_losses);
    CHECK(params1.layers[1].w_f.v == params2.layers[1].w_f.v);
    CHECK(base1.entity_emb.v == base2.entity_emb.v);
}

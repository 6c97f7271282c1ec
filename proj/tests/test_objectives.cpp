// Objective terms against hand-computed oracles: closed-form distances,
// restricted-softmax NLL identities, pair mining vs a brute-force reference,
// and the linear-combination contract of the total.

#include <cmath>
#include <set>

#include "doctest.h"
#include "rmm/corpus.hpp"
#include "rmm/objectives.hpp"

using namespace rmm;

namespace {

ModelConfig phi_config() {
    ModelConfig m;
    m.embed_dim = 8;
    m.n_heads = 2;
    m.n_layers_v = 1;
    m.n_layers_l = 1;
    m.expose_layer_v = 1;
    m.n_dec_layers = 1;
    m.image_h = 8;
    m.image_w = 8;
    m.patch = 4;
    m.vocab = 12;
    m.max_text_len = 8;
    return m;
}

}  // namespace

TEST_CASE("feature_distance closed forms") {
    Tensor a({2}, {0.5, -0.5});
    Tensor b({2}, {0.0, 0.0});
    CHECK(feature_distance(a, b, ImageLossMode::l1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(feature_distance(a, b, ImageLossMode::l2sq) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(feature_distance(a, a, ImageLossMode::l1) == 0.0);
    CHECK(feature_distance(a, a, ImageLossMode::l2sq) == 0.0);
}

TEST_CASE("perceptual extractor is frozen and reproducible") {
    ModelConfig m = phi_config();
    PerceptualExtractor p1 = make_perceptual_extractor(m);
    PerceptualExtractor p2 = make_perceptual_extractor(m);
    for (const auto& [name, t] : p1.params) CHECK(bit_equal(t, p2.params.get(name)));

    // gradients flow through phi into the reconstruction, but phi's own
    // parameters are not registered on the tape
    Tape t;
    ParamStore ps;
    ps.add("recon", Tensor::full({4, 16}, 0.4));
    Var g = t.param(ps, "recon");
    Tensor clean = perceptual_features(p1, Tensor::full({4, 16}, 0.6));
    Var loss = loss_image(t, p1, g, clean, ImageLossMode::l2sq);
    GradMap grads = t.backward(loss, ps);
    CHECK(grads.size() == 1);
    CHECK(grads.count("recon") == 1);
    double norm = 0;
    for (double v : grads.at("recon").values) norm += v * v;
    CHECK(norm > 0);
}

TEST_CASE("loss_image identical grids is exactly zero") {
    ModelConfig m = phi_config();
    PerceptualExtractor phi = make_perceptual_extractor(m);
    RngStream rng(3, "img");
    Tensor grid = Tensor::zeros({4, 16});
    for (double& v : grid.values) v = rng.uniform();
    CHECK(loss_image(phi, grid, grid, ImageLossMode::l1) == 0.0);
    CHECK(loss_image(phi, grid, grid, ImageLossMode::l2sq) == 0.0);
}

TEST_CASE("loss_text two-row hand oracle") {
    // Row softmax over the full 2-wide support: logits (0, ln 3) give
    // p = (0.25, 0.75). Targets pick column 1 then column 0.
    double l = std::log(3.0);
    Tensor logits({2, 2}, {0.0, l, 0.0, l});
    double expect = 0.5 * (-std::log(0.75) - std::log(0.25));
    CHECK(loss_text(logits, {1, 0}, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("uniform logits over a 64-token support give ln 64") {
    // vocab 64 plus 3 reserved columns; support starts at the first content id
    Tensor logits = Tensor::full({5, 67}, 0.7);
    std::vector<int> targets = {3, 10, 40, 66, 5};
    CHECK(std::abs(loss_text(logits, targets, kFirstContentId) - std::log(64.0)) < 1e-9);
}

TEST_CASE("out-of-support columns never affect the text loss") {
    Tensor base = Tensor::full({2, 7}, 0.1);
    Tensor spiked = base;
    spiked.at(0, 0) = 50.0;  // reserved column
    spiked.at(1, 2) = -40.0;
    CHECK(loss_text(base, {3, 5}, 3) == loss_text(spiked, {3, 5}, 3));
}

TEST_CASE("high-margin logits drive the text loss to zero") {
    Tensor logits = Tensor::zeros({1, 6});
    logits.at(0, 4) = 30.0;  // 30-nat margin over the rest of the support
    CHECK(loss_text(logits, {4}, 3) < 1e-9);
    CHECK(loss_text(logits, {4}, 3) >= 0.0);
}

TEST_CASE("loss_text rejects targets outside the support") {
    Tensor logits = Tensor::zeros({1, 6});
    CHECK_THROWS_AS(loss_text(logits, {2}, 3), ConfigError);
    CHECK_THROWS_AS(loss_text(logits, {6}, 3), ConfigError);
    CHECK_THROWS_AS(loss_text(logits, {3, 4}, 3), ConfigError);  // row/target count mismatch
}

TEST_CASE("similar_pairs: label mode vs brute force, cross-domain only") {
    std::vector<PairKey> batch = {
        {0, 0, {}}, {0, 1, {}}, {1, 0, {}}, {0, 0, {}}, {1, 1, {}}, {0, 1, {}},
    };
    auto pairs = similar_pairs(batch, PairMode::label, 0.0);
    std::set<std::pair<std::size_t, std::size_t>> got(pairs.begin(), pairs.end());
    std::set<std::pair<std::size_t, std::size_t>> want;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = i + 1; j < batch.size(); ++j) {
            if (batch[i].class_label == batch[j].class_label && batch[i].domain != batch[j].domain) {
                want.insert({i, j});
            }
        }
    }
    CHECK(got == want);
    CHECK(want.count({0, 1}) == 1);
    CHECK(want.count({0, 3}) == 0);  // same domain, excluded
    for (auto [i, j] : pairs) {
        CHECK(i < j);
        CHECK(batch[i].domain != batch[j].domain);
    }
}

TEST_CASE("similar_pairs: jaccard mode matches a set-overlap oracle") {
    // content sets: {3,4,5}, {4,5,6}, {9,10}, {3,4,5}
    std::vector<PairKey> batch = {
        {0, 0, {kClsId, 3, 4, 5, 4}},
        {0, 1, {kClsId, 4, 5, 6}},
        {1, 1, {kClsId, 9, 10}},
        {2, 1, {kClsId, 3, 5, 4}},
    };
    auto jaccard = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::set<int> sa, sb, un, in;
        for (int x : a) if (x >= kFirstContentId) sa.insert(x);
        for (int x : b) if (x >= kFirstContentId) sb.insert(x);
        un = sa;
        un.insert(sb.begin(), sb.end());
        for (int x : sa) if (sb.count(x)) in.insert(x);
        return un.empty() ? 0.0 : double(in.size()) / double(un.size());
    };
    auto pairs = similar_pairs(batch, PairMode::jaccard, 0.3);
    std::set<std::pair<std::size_t, std::size_t>> got(pairs.begin(), pairs.end());
    std::set<std::pair<std::size_t, std::size_t>> want;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = i + 1; j < batch.size(); ++j) {
            if (batch[i].domain == batch[j].domain) continue;
            if (jaccard(batch[i].tokens, batch[j].tokens) >= 0.3) want.insert({i, j});
        }
    }
    CHECK(got == want);
    CHECK(want.count({0, 1}) == 1);   // overlap 2/4 = 0.5
    CHECK(want.count({0, 2}) == 0);   // disjoint
    CHECK(want.count({0, 3}) == 1);   // identical sets, different labels still pair
    CHECK(want.count({1, 2}) == 0);   // same domain
}

TEST_CASE("loss_domain hand case and empty-pair convention") {
    std::vector<Tensor> fused = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0})};
    CHECK(loss_domain(fused, {{0, 1}}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(loss_domain(fused, {}) == 0.0);

    // two pairs average: d({1,0},{0,1}) = 2 and d({1,0},{1,0}) = 0 -> 1
    std::vector<Tensor> three = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0}),
                                 Tensor({2}, {1.0, 0.0})};
    CHECK(loss_domain(three, {{0, 1}, {0, 2}}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-domain batches produce zero domain loss") {
    std::vector<PairKey> batch = {{0, 3, {}}, {0, 3, {}}, {1, 3, {}}};
    CHECK(similar_pairs(batch, PairMode::label, 0.0).empty());
    std::vector<Tensor> fused(3, Tensor({2}, {0.5, 0.5}));
    CHECK(loss_domain(fused, similar_pairs(batch, PairMode::label, 0.0)) == 0.0);
}

TEST_CASE("loss_resilience hand case and zero iff all three agree") {
    Tensor z({1}, {0.0}), zv({1}, {1.0}), zl({1}, {-1.0});
    CHECK(loss_resilience(z, zv, zl) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(loss_resilience(zv, zv, zv) == 0.0);
    CHECK(loss_resilience(z, z, zl) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(loss_resilience(z, zv, z) > 0.0);
}

TEST_CASE("loss_total is the documented linear combination") {
    LossWeights w;  // defaults 1, 1, 0.1, 0.1
    CHECK(loss_total(2.0, 3.0, 4.0, 5.0, w) == doctest::Approx(5.9).epsilon(1e-12));

    LossWeights gated;
    gated.domain = 0.0;
    gated.resilience = 0.0;
    CHECK(loss_total(2.0, 3.0, 4.0, 5.0, gated) == doctest::Approx(5.0).epsilon(1e-12));

    // homogeneity: doubling every weight doubles the total
    LossWeights dbl = w;
    dbl.image *= 2;
    dbl.text *= 2;
    dbl.domain *= 2;
    dbl.resilience *= 2;
    CHECK(loss_total(2.0, 3.0, 4.0, 5.0, dbl) ==
          doctest::Approx(2 * loss_total(2.0, 3.0, 4.0, 5.0, w)).epsilon(1e-12));

    // linearity in each slot
    RngStream rng(9, "lin");
    for (int i = 0; i < 20; ++i) {
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
        double direct = loss_total(a, b, c, d, w);
        double rebuilt = w.image * a + w.text * b + w.domain * c + w.resilience * d;
        CHECK(std::abs(direct - rebuilt) < 1e-12);
    }
    LossWeights bad;
    bad.image = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("tape and tensor paths of each term agree") {
    ModelConfig m = phi_config();
    PerceptualExtractor phi = make_perceptual_extractor(m);
    RngStream rng(4, "agree");
    Tensor recon = Tensor::zeros({4, 16});
    Tensor clean = Tensor::zeros({4, 16});
    for (double& v : recon.values) v = rng.uniform();
    for (double& v : clean.values) v = rng.uniform();

    Tape t;
    ParamStore ps;
    ps.add("r", recon);
    Var r = t.param(ps, "r");
    Tensor clean_feat = perceptual_features(phi, clean);
    double tape_l1 = t.scalar(loss_image(t, phi, r, clean_feat, ImageLossMode::l1));
    CHECK(tape_l1 == doctest::Approx(loss_image(phi, recon, clean, ImageLossMode::l1)).epsilon(1e-12));

    Tensor logits({3, 7}, std::vector<double>(21, 0.0));
    for (double& v : logits.values) v = rng.uniform();
    std::vector<int> targets = {3, 6, 4};
    ps.add("lg", logits);
    Var lg = t.param(ps, "lg");
    double tape_txt = t.scalar(t.masked_nll_sum(lg, targets, kFirstContentId)) / 3.0;
    CHECK(tape_txt == doctest::Approx(loss_text(logits, targets, kFirstContentId)).epsilon(1e-12));
}

// Encoder/decoder forward contracts: patchify round trips, empty-modality
// fallbacks, permutation equivariance, layer exposure, cross-modal
// conditioning, and shape closure over random mask plans.

#include <cmath>

#include "doctest.h"
#include "rmm/corruption.hpp"
#include "rmm/model.hpp"
#include "rmm/objectives.hpp"

using namespace rmm;

namespace {

ModelConfig tiny_config() {
    ModelConfig m;
    m.embed_dim = 8;
    m.n_heads = 2;
    m.n_layers_v = 2;
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

MaskedImage unmasked_grid(const Tensor& grid) {
    MaskPlan none;
    return apply_image_mask(grid, none);
}

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    RngStream rng(seed, "mimg");
    Tensor t = Tensor::zeros({h, w});
    for (double& v : t.values) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("config validation enforces head divisibility and layer exposure") {
    ModelConfig m = tiny_config();
    CHECK_NOTHROW(m.validate());
    m.n_heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = tiny_config();
    m.expose_layer_v = 3;  // > n_layers_v
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = tiny_config();
    m.expose_layer_v = 0;  // 1-based
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("patchify: identity tile, round trip, constant symmetry") {
    Tensor img4({4, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
    Tensor g = patchify(img4, 4);
    CHECK(g.shape == std::vector<std::size_t>{1, 16});
    CHECK(g.values == img4.values);

    Tensor img8 = random_image(8, 8, 5);
    Tensor grid = patchify(img8, 4);
    CHECK(grid.shape == std::vector<std::size_t>{4, 16});
    CHECK(bit_equal(unpatchify(grid, 8, 8, 4), img8));

    Tensor flat = patchify(Tensor::full({8, 8}, 0.3), 4);
    for (std::size_t r = 1; r < 4; ++r) {
        for (std::size_t c = 0; c < 16; ++c) CHECK(flat.at(r, c) == flat.at(0, c));
    }
    CHECK_THROWS_AS(patchify(img8, 3), ConfigError);
}

TEST_CASE("init_params is deterministic and keyed per parameter name") {
    ModelConfig m = tiny_config();
    ParamStore a = init_params(m, RngStream(1, "init"));
    ParamStore b = init_params(m, RngStream(1, "init"));
    CHECK(a.total_scalars() == b.total_scalars());
    for (const auto& [name, t] : a) CHECK(bit_equal(t, b.get(name)));
    // LayerNorm gains start at one, biases at zero
    for (double v : a.get("enc_v.0.ln1.g").values) CHECK(v == 1.0);
    for (double v : a.get("enc_v.0.attn.bq").values) CHECK(v == 0.0);
    ParamStore c = init_params(m, RngStream(2, "init"));
    CHECK(!bit_equal(a.get("embed.patch.w"), c.get("embed.patch.w")));
}

TEST_CASE("encode_image handles the empty visible set") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(3, "init"));
    Tensor grid = patchify(random_image(8, 8, 6), 4);
    MaskPlan all;
    all.image_patches = {0, 1, 2, 3};
    Tape t;
    ImageEncoding enc = encode_image(t, p, m, apply_image_mask(grid, all));
    CHECK(enc.n_visible == 0);
    CHECK(enc.layers.empty());
    // downstream still produces full-shape outputs
    std::vector<Var> txt = encode_text(t, p, m, {kClsId, 5, 6, 7});
    Latents lat = project_and_pool(t, p, m, enc, txt);
    CHECK(!lat.zv_seq.has_value());
    for (double v : t.val(lat.z_v).values) CHECK(v == 0.0);
    Var recon = decode_image(t, p, m, lat, enc.visible_indices, lat.zl_seq);
    CHECK(t.val(recon).shape == std::vector<std::size_t>{4, 16});
    // fused z equals z_l / 2 when z_v is zero
    Tensor z = t.val(lat.z);
    Tensor zl = t.val(lat.z_l);
    for (std::size_t i = 0; i < z.values.size(); ++i) {
        CHECK(z.values[i] == doctest::Approx(zl.values[i] / 2).epsilon(1e-12));
    }
}

TEST_CASE("visible patches are encoded equivariantly under reordering") {
    // Swapping two visible rows together with their grid indices permutes the
    // output rows the same way and nothing else.
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(4, "init"));
    Tensor grid = patchify(random_image(8, 8, 7), 4);

    MaskedImage a;
    a.total_patches = 4;
    a.visible_indices = {1, 3};
    Tensor va = Tensor::zeros({2, 16});
    for (std::size_t c = 0; c < 16; ++c) {
        va.at(0, c) = grid.at(1, c);
        va.at(1, c) = grid.at(3, c);
    }
    a.visible = va;

    MaskedImage b;
    b.total_patches = 4;
    b.visible_indices = {3, 1};
    Tensor vb = Tensor::zeros({2, 16});
    for (std::size_t c = 0; c < 16; ++c) {
        vb.at(0, c) = grid.at(3, c);
        vb.at(1, c) = grid.at(1, c);
    }
    b.visible = vb;

    Tape t;
    ImageEncoding ea = encode_image(t, p, m, a);
    ImageEncoding eb = encode_image(t, p, m, b);
    Tensor la = t.val(ea.layers.back());
    Tensor lb = t.val(eb.layers.back());
    for (std::size_t c = 0; c < m.embed_dim; ++c) {
        CHECK(la.at(0, c) == doctest::Approx(lb.at(1, c)).epsilon(1e-12));
        CHECK(la.at(1, c) == doctest::Approx(lb.at(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("encode_text validates input and reacts to content changes") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(5, "init"));
    Tape t;
    CHECK_THROWS_AS(encode_text(t, p, m, {5, 6}), ConfigError);        // no CLS
    CHECK_THROWS_AS(encode_text(t, p, m, std::vector<int>(9, kClsId)), ConfigError);  // too long
    CHECK_THROWS_AS(encode_text(t, p, m, {kClsId, 99}), ConfigError);  // id out of range

    std::vector<int> toks = {kClsId, 4, 5, 6};
    std::vector<int> toks2 = {kClsId, 4, 9, 6};
    Tensor o1 = t.val(encode_text(t, p, m, toks).back());
    Tensor o2 = t.val(encode_text(t, p, m, toks2).back());
    double cls_delta = 0;
    for (std::size_t c = 0; c < m.embed_dim; ++c) {
        double d = o1.at(0, c) - o2.at(0, c);
        cls_delta += d * d;
    }
    CHECK(cls_delta > 0);  // CLS mixes in every position via attention
}

TEST_CASE("expose_layer_v selects which encoder layer feeds the projection") {
    ModelConfig m1 = tiny_config();
    ModelConfig m2 = tiny_config();
    m2.expose_layer_v = 2;
    ParamStore p = init_params(m1, RngStream(6, "init"));
    Tensor grid = patchify(random_image(8, 8, 8), 4);
    Tape t;
    ImageEncoding enc = encode_image(t, p, m1, unmasked_grid(grid));
    std::vector<Var> txt = encode_text(t, p, m1, {kClsId, 3, 4});
    Latents l1 = project_and_pool(t, p, m1, enc, txt);
    Latents l2 = project_and_pool(t, p, m2, enc, txt);
    CHECK(max_abs_diff(t.val(*l1.zv_seq), t.val(*l2.zv_seq)) > 0);
    CHECK(bit_equal(t.val(l1.zl_seq), t.val(l2.zl_seq)));  // text side unaffected
}

TEST_CASE("mean pool matches a per-coordinate average") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(7, "init"));
    Tensor grid = patchify(random_image(8, 8, 9), 4);
    Tape t;
    ImageEncoding enc = encode_image(t, p, m, unmasked_grid(grid));
    std::vector<Var> txt = encode_text(t, p, m, {kClsId, 3});
    Latents lat = project_and_pool(t, p, m, enc, txt);
    Tensor seq = t.val(*lat.zv_seq);
    Tensor pooled = t.val(lat.z_v);
    for (std::size_t c = 0; c < m.embed_dim; ++c) {
        double mean = 0;
        for (std::size_t r = 0; r < seq.rows(); ++r) mean += seq.at(r, c);
        mean /= seq.rows();
        CHECK(pooled.values[c] == doctest::Approx(mean).epsilon(1e-12));
    }
    // fused vector is the midpoint of the pooled pair
    Tensor zv = t.val(lat.z_v), zl = t.val(lat.z_l), z = t.val(lat.z);
    for (std::size_t c = 0; c < m.embed_dim; ++c) {
        CHECK(z.values[c] == doctest::Approx((zv.values[c] + zl.values[c]) / 2).epsilon(1e-12));
    }
}

TEST_CASE("zeroed cross-attention makes image reconstruction text-independent") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(8, "init"));
    std::vector<std::string> xattn_names;
    for (const auto& [name, t] : p) {
        if (name.find("xattn") != std::string::npos) xattn_names.push_back(name);
    }
    REQUIRE(!xattn_names.empty());
    for (const std::string& name : xattn_names) {
        for (double& v : p.get_mutable(name).values) v = 0.0;
    }
    Tensor grid = patchify(random_image(8, 8, 10), 4);
    MaskPlan plan;
    plan.image_patches = {2};
    MaskedImage mi = apply_image_mask(grid, plan);

    auto recon_with = [&](const std::vector<int>& toks) {
        Tape t;
        ImageEncoding enc = encode_image(t, p, m, mi);
        std::vector<Var> txt = encode_text(t, p, m, toks);
        Latents lat = project_and_pool(t, p, m, enc, txt);
        return t.val(decode_image(t, p, m, lat, enc.visible_indices, lat.zl_seq));
    };
    CHECK(bit_equal(recon_with({kClsId, 3, 4, 5}), recon_with({kClsId, 10, 11})));

    // and with live cross-attention the text matters
    ParamStore p2 = init_params(m, RngStream(8, "init"));
    auto recon2 = [&](const std::vector<int>& toks) {
        Tape t;
        ImageEncoding enc = encode_image(t, p2, m, mi);
        std::vector<Var> txt = encode_text(t, p2, m, toks);
        Latents lat = project_and_pool(t, p2, m, enc, txt);
        return t.val(decode_image(t, p2, m, lat, enc.visible_indices, lat.zl_seq));
    };
    CHECK(max_abs_diff(recon2({kClsId, 3, 4, 5}), recon2({kClsId, 10, 11})) > 0);
}

TEST_CASE("decode_text pools the image pathway unless its weights are zeroed") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(9, "init"));
    Tensor g1 = patchify(random_image(8, 8, 11), 4);
    Tensor g2 = patchify(random_image(8, 8, 12), 4);
    std::vector<int> toks = {kClsId, kMaskId, 4, kMaskId};
    std::vector<std::size_t> positions = {1, 3};

    auto logits_for = [&](const ParamStore& params, const Tensor& grid) {
        Tape t;
        ImageEncoding enc = encode_image(t, params, m, unmasked_grid(grid));
        std::vector<Var> txt = encode_text(t, params, m, toks);
        Latents lat = project_and_pool(t, params, m, enc, txt);
        return t.val(decode_text(t, params, m, lat, positions));
    };
    Tensor l1 = logits_for(p, g1);
    CHECK(l1.shape == std::vector<std::size_t>{2, m.vocab + 3});
    CHECK(max_abs_diff(l1, logits_for(p, g2)) > 0);  // image content reaches the logits

    // zero the image half of the first MLP layer: rows embed_dim..2*embed_dim-1
    ParamStore pz = init_params(m, RngStream(9, "init"));
    Tensor& w1 = pz.get_mutable("dec_l.w1");
    for (std::size_t r = m.embed_dim; r < 2 * m.embed_dim; ++r) {
        for (std::size_t c = 0; c < w1.cols(); ++c) w1.at(r, c) = 0.0;
    }
    CHECK(bit_equal(logits_for(pz, g1), logits_for(pz, g2)));
}

TEST_CASE("forward pass is shape-closed over random mask plans") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(10, "init"));
    PerceptualExtractor phi = make_perceptual_extractor(m);
    MaskBounds wide{0.0, 1.0, 0.0, 1.0};
    Tensor img = random_image(8, 8, 13);
    std::vector<int> toks = {kClsId, 3, 4, 5, 6, 7};
    RngStream rng(77, "plans");
    for (int trial = 0; trial < 25; ++trial) {
        MaskPlan plan = sample_mask_plan(rng, m.n_patches(), toks.size(), wide);
        MaskedImage mi = apply_image_mask(patchify(img, m.patch), plan);
        MaskedText mt = apply_text_mask(toks, plan);
        Tape t;
        ImageEncoding enc = encode_image(t, p, m, mi);
        std::vector<Var> txt = encode_text(t, p, m, mt.tokens);
        Latents lat = project_and_pool(t, p, m, enc, txt);
        Var recon = decode_image(t, p, m, lat, enc.visible_indices, lat.zl_seq);
        CHECK(t.val(recon).shape == std::vector<std::size_t>{4, 16});
        Var li = loss_image(t, phi, recon, perceptual_features(phi, patchify(img, m.patch)),
                            ImageLossMode::l1);
        CHECK(std::isfinite(t.scalar(li)));
        if (!mt.targets.empty()) {
            std::vector<std::size_t> positions;
            for (std::size_t k = 0; k < mt.tokens.size(); ++k) {
                if (mt.tokens[k] == kMaskId) positions.push_back(k);
            }
            Var logits = decode_text(t, p, m, lat, positions);
            CHECK(t.val(logits).rows() == mt.targets.size());
            CHECK(std::isfinite(t.scalar(t.masked_nll_sum(logits, mt.targets, kFirstContentId))));
        }
    }
}

TEST_CASE("embed_sample matches the tape path and is deterministic") {
    ModelConfig m = tiny_config();
    ParamStore p = init_params(m, RngStream(11, "init"));
    Tensor img = random_image(8, 8, 14);
    std::vector<int> toks = {kClsId, 5, 6};
    SampleEmbedding e1 = embed_sample(p, m, img, toks);
    SampleEmbedding e2 = embed_sample(p, m, img, toks);
    CHECK(bit_equal(e1.z, e2.z));
    for (std::size_t c = 0; c < m.embed_dim; ++c) {
        CHECK(e1.z.values[c] ==
              doctest::Approx((e1.z_v.values[c] + e1.z_l.values[c]) / 2).epsilon(1e-12));
    }
}

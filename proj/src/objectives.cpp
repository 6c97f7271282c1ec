#include "rmm/objectives.hpp"

#include <algorithm>
#include <set>

namespace rmm {

namespace {

// The extractor is identical in every run: its stream is rooted at this
// constant, not at the run seed.
constexpr std::uint64_t kPerceptualSeed = 0x9e2f77003ull;

}  // namespace

void LossWeights::validate() const {
    if (image < 0.0 || text < 0.0 || domain < 0.0 || resilience < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
}

PerceptualExtractor make_perceptual_extractor(const ModelConfig& cfg) {
    cfg.validate();
    PerceptualExtractor phi;
    phi.cfg = cfg;
    RngStream root(kPerceptualSeed, "perceptual");
    std::size_t d = cfg.embed_dim;
    auto gauss_mat = [&](const std::string& name, std::size_t r, std::size_t c) {
        RngStream s = root.fork(name);
        Tensor t = Tensor::zeros({r, c});
        for (double& x : t.values) x = s.gaussian(0.0, 0.02);
        phi.params.add(name, std::move(t));
    };
    auto vec = [&](const std::string& name, std::size_t n, double fill) {
        phi.params.add(name, Tensor::full({n}, fill));
    };
    gauss_mat("phi.patch.w", cfg.patch_dim(), d);
    vec("phi.patch.b", d, 0.0);
    vec("phi.blk.ln1.g", d, 1.0);
    vec("phi.blk.ln1.b", d, 0.0);
    for (const char* w : {".wq", ".wk", ".wv", ".wo"}) gauss_mat(std::string("phi.blk.attn") + w, d, d);
    for (const char* b : {".bq", ".bk", ".bv", ".bo"}) vec(std::string("phi.blk.attn") + b, d, 0.0);
    vec("phi.blk.ln2.g", d, 1.0);
    vec("phi.blk.ln2.b", d, 0.0);
    gauss_mat("phi.blk.ffn.w1", d, 4 * d);
    vec("phi.blk.ffn.b1", 4 * d, 0.0);
    gauss_mat("phi.blk.ffn.w2", 4 * d, d);
    vec("phi.blk.ffn.b2", d, 0.0);
    return phi;
}

Var perceptual_features(Tape& t, const PerceptualExtractor& phi, Var patch_grid) {
    const ParamStore& p = phi.params;
    const ModelConfig& cfg = phi.cfg;
    if (t.val(patch_grid).cols() != cfg.patch_dim()) {
        throw ConfigError("perceptual_features: patch dim mismatch");
    }
    std::size_t d = cfg.embed_dim, h = cfg.n_heads, dh = d / h;
    Var x = t.add_rowvec(t.matmul(patch_grid, t.param(p, "phi.patch.w")), t.param(p, "phi.patch.b"));
    Var n1 = t.layer_norm(x, t.param(p, "phi.blk.ln1.g"), t.param(p, "phi.blk.ln1.b"), cfg.ln_eps);
    // one attention block, inline to keep phi self-contained
    Var q = t.add_rowvec(t.matmul(n1, t.param(p, "phi.blk.attn.wq")), t.param(p, "phi.blk.attn.bq"));
    Var k = t.add_rowvec(t.matmul(n1, t.param(p, "phi.blk.attn.wk")), t.param(p, "phi.blk.attn.bk"));
    Var v = t.add_rowvec(t.matmul(n1, t.param(p, "phi.blk.attn.wv")), t.param(p, "phi.blk.attn.bv"));
    std::vector<Var> heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t i = 0; i < h; ++i) {
        Var qi = t.slice_cols(q, i * dh, (i + 1) * dh);
        Var ki = t.slice_cols(k, i * dh, (i + 1) * dh);
        Var vi = t.slice_cols(v, i * dh, (i + 1) * dh);
        Var attn = t.softmax_rows(t.scale(t.matmul_nt(qi, ki), inv_sqrt));
        heads.push_back(t.matmul(attn, vi));
    }
    Var merged = h == 1 ? heads[0] : t.concat_cols(heads);
    Var attn_out = t.add_rowvec(t.matmul(merged, t.param(p, "phi.blk.attn.wo")),
                                t.param(p, "phi.blk.attn.bo"));
    x = t.add(x, attn_out);
    Var n2 = t.layer_norm(x, t.param(p, "phi.blk.ln2.g"), t.param(p, "phi.blk.ln2.b"), cfg.ln_eps);
    Var hmid = t.gelu(t.add_rowvec(t.matmul(n2, t.param(p, "phi.blk.ffn.w1")),
                                   t.param(p, "phi.blk.ffn.b1")));
    Var ff = t.add_rowvec(t.matmul(hmid, t.param(p, "phi.blk.ffn.w2")),
                          t.param(p, "phi.blk.ffn.b2"));
    x = t.add(x, ff);
    return t.mean_rows(x);
}

Tensor perceptual_features(const PerceptualExtractor& phi, const Tensor& patch_grid) {
    Tape t;
    Var f = perceptual_features(t, phi, t.constant(patch_grid));
    return t.val(f);
}

Var feature_distance(Tape& t, Var a, Var b, ImageLossMode mode) {
    Var d = t.sub(a, b);
    return mode == ImageLossMode::l1 ? t.abs_sum(d) : t.sq_sum(d);
}

double feature_distance(const Tensor& a, const Tensor& b, ImageLossMode mode) {
    Tape t;
    return t.scalar(feature_distance(t, t.constant(a), t.constant(b), mode));
}

Var loss_image(Tape& t, const PerceptualExtractor& phi, Var recon_grid,
               const Tensor& clean_features, ImageLossMode mode) {
    Var f = perceptual_features(t, phi, recon_grid);
    return feature_distance(t, f, t.constant(clean_features), mode);
}

double loss_image(const PerceptualExtractor& phi, const Tensor& recon_grid, const Tensor& clean_grid,
                  ImageLossMode mode) {
    Tape t;
    Tensor clean_f = perceptual_features(phi, clean_grid);
    return t.scalar(loss_image(t, phi, t.constant(recon_grid), clean_f, mode));
}

Var loss_text(Tape& t, Var logits, const std::vector<int>& targets, std::size_t support_begin) {
    if (targets.empty()) throw ConfigError("loss_text: no targets (caller must skip)");
    Var sum = t.masked_nll_sum(logits, targets, support_begin);
    return t.scale(sum, 1.0 / static_cast<double>(targets.size()));
}

double loss_text(const Tensor& logits, const std::vector<int>& targets, std::size_t support_begin) {
    Tape t;
    return t.scalar(loss_text(t, t.constant(logits), targets, support_begin));
}

std::vector<std::pair<std::size_t, std::size_t>> similar_pairs(const std::vector<PairKey>& batch,
                                                               PairMode mode, double tau) {
    if (mode == PairMode::jaccard && !(tau >= 0.0 && tau <= 1.0)) {
        throw ConfigError("similar_pairs: tau must lie in [0,1]");
    }
    std::vector<std::set<int>> sets;
    if (mode == PairMode::jaccard) {
        sets.reserve(batch.size());
        for (const PairKey& k : batch) {
            std::set<int> s;
            for (int tok : k.tokens) {
                if (tok >= kFirstContentId) s.insert(tok);
            }
            sets.push_back(std::move(s));
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = i + 1; j < batch.size(); ++j) {
            if (batch[i].domain == batch[j].domain) continue;
            bool similar = false;
            if (mode == PairMode::label) {
                similar = batch[i].class_label == batch[j].class_label;
            } else {
                const std::set<int>& a = sets[i];
                const std::set<int>& b = sets[j];
                std::size_t inter = 0;
                for (int x : a) inter += b.count(x);
                std::size_t uni = a.size() + b.size() - inter;
                double jac = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
                similar = jac >= tau;
            }
            if (similar) pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

Var loss_domain(Tape& t, const std::vector<Var>& fused,
                const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    if (pairs.empty()) return t.zeros_const({1});
    Var acc;
    bool first = true;
    for (const auto& [i, j] : pairs) {
        if (i >= fused.size() || j >= fused.size()) {
            throw ConfigError("loss_domain: pair index out of batch range");
        }
        Var d = t.sq_sum(t.sub(fused[i], fused[j]));
        acc = first ? d : t.add(acc, d);
        first = false;
    }
    return t.scale(acc, 1.0 / static_cast<double>(pairs.size()));
}

double loss_domain(const std::vector<Tensor>& fused,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(fused.size());
    for (const Tensor& f : fused) vars.push_back(t.constant(f));
    return t.scalar(loss_domain(t, vars, pairs));
}

Var loss_resilience(Tape& t, const std::vector<Latents>& batch) {
    if (batch.empty()) throw ConfigError("loss_resilience: empty batch");
    Var acc;
    bool first = true;
    for (const Latents& lat : batch) {
        Var term = t.add(t.sq_sum(t.sub(lat.z, lat.z_v)), t.sq_sum(t.sub(lat.z, lat.z_l)));
        acc = first ? term : t.add(acc, term);
        first = false;
    }
    return t.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

double loss_resilience(const Tensor& z, const Tensor& z_v, const Tensor& z_l) {
    Tape t;
    Latents lat;
    lat.z = t.constant(z);
    lat.z_v = t.constant(z_v);
    lat.z_l = t.constant(z_l);
    return t.scalar(loss_resilience(t, {lat}));
}

double loss_total(double l_img, double l_txt, double l_dom, double l_res, const LossWeights& w) {
    w.validate();
    return w.image * l_img + w.text * l_txt + w.domain * l_dom + w.resilience * l_res;
}

}  // namespace rmm

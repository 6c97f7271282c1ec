#include "rmm/model.hpp"

#include <cmath>

namespace rmm {

namespace {

// Multi-head scaled dot-product attention; q_src supplies queries, kv_src
// keys and values. Bidirectional, no masking.
Var attention(Tape& t, const ParamStore& p, const ModelConfig& cfg, const std::string& prefix,
              Var q_src, Var kv_src) {
    std::size_t d = cfg.embed_dim, h = cfg.n_heads, dh = d / h;
    Var q = t.add_rowvec(t.matmul(q_src, t.param(p, prefix + ".wq")), t.param(p, prefix + ".bq"));
    Var k = t.add_rowvec(t.matmul(kv_src, t.param(p, prefix + ".wk")), t.param(p, prefix + ".bk"));
    Var v = t.add_rowvec(t.matmul(kv_src, t.param(p, prefix + ".wv")), t.param(p, prefix + ".bv"));
    std::vector<Var> heads;
    heads.reserve(h);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t i = 0; i < h; ++i) {
        Var qi = t.slice_cols(q, i * dh, (i + 1) * dh);
        Var ki = t.slice_cols(k, i * dh, (i + 1) * dh);
        Var vi = t.slice_cols(v, i * dh, (i + 1) * dh);
        Var scores = t.scale(t.matmul_nt(qi, ki), inv_sqrt);
        Var attn = t.softmax_rows(scores);
        heads.push_back(t.matmul(attn, vi));
    }
    Var merged = h == 1 ? heads[0] : t.concat_cols(heads);
    return t.add_rowvec(t.matmul(merged, t.param(p, prefix + ".wo")), t.param(p, prefix + ".bo"));
}

Var ffn(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
    Var hmid = t.gelu(t.add_rowvec(t.matmul(x, t.param(p, prefix + ".w1")), t.param(p, prefix + ".b1")));
    return t.add_rowvec(t.matmul(hmid, t.param(p, prefix + ".w2")), t.param(p, prefix + ".b2"));
}

Var ln(Tape& t, const ParamStore& p, const ModelConfig& cfg, const std::string& prefix, Var x) {
    return t.layer_norm(x, t.param(p, prefix + ".g"), t.param(p, prefix + ".b"), cfg.ln_eps);
}

// Pre-norm encoder block: x += attn(ln1(x)); x += ffn(ln2(x)).
Var encoder_block(Tape& t, const ParamStore& p, const ModelConfig& cfg, const std::string& prefix,
                  Var x) {
    Var n1 = ln(t, p, cfg, prefix + ".ln1", x);
    x = t.add(x, attention(t, p, cfg, prefix + ".attn", n1, n1));
    Var n2 = ln(t, p, cfg, prefix + ".ln2", x);
    return t.add(x, ffn(t, p, prefix + ".ffn", n2));
}

// Decoder block: self-attention, then cross-attention onto text (optional),
// then FFN, each pre-normed and residual.
Var decoder_block(Tape& t, const ParamStore& p, const ModelConfig& cfg, const std::string& prefix,
                  Var x, std::optional<Var> text_seq) {
    Var n1 = ln(t, p, cfg, prefix + ".ln1", x);
    x = t.add(x, attention(t, p, cfg, prefix + ".attn", n1, n1));
    if (text_seq.has_value()) {
        Var n2 = ln(t, p, cfg, prefix + ".ln2", x);
        x = t.add(x, attention(t, p, cfg, prefix + ".xattn", n2, *text_seq));
    }
    Var n3 = ln(t, p, cfg, prefix + ".ln3", x);
    return t.add(x, ffn(t, p, prefix + ".ffn", n3));
}

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("model: ") + name + " must be >= 1");
    };
    positive(embed_dim, "embed_dim");
    positive(n_heads, "n_heads");
    positive(n_layers_v, "n_layers_v");
    positive(n_layers_l, "n_layers_l");
    positive(n_dec_layers, "n_dec_layers");
    positive(patch, "patch");
    positive(image_h, "image_h");
    positive(image_w, "image_w");
    positive(vocab, "vocab");
    positive(max_text_len, "max_text_len");
    if (embed_dim % n_heads != 0) {
        throw ConfigError("model: embed_dim " + std::to_string(embed_dim) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (expose_layer_v < 1 || expose_layer_v > n_layers_v) {
        throw ConfigError("model: expose_layer_v " + std::to_string(expose_layer_v) +
                          " outside [1," + std::to_string(n_layers_v) + "]");
    }
    if (image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("model: patch must divide image dims");
    }
    if (ln_eps <= 0.0) throw ConfigError("model: ln_eps must be positive");
}

namespace {

void add_block_params(const ModelConfig& cfg, const RngStream& root, ParamStore& ps,
                      const std::string& prefix, bool with_cross) {
    std::size_t d = cfg.embed_dim;
    auto gauss_mat = [&](const std::string& name, std::size_t r, std::size_t c) {
        RngStream s = root.fork(name);
        Tensor t = Tensor::zeros({r, c});
        for (double& x : t.values) x = s.gaussian(0.0, 0.02);
        ps.add(name, std::move(t));
    };
    auto vec = [&](const std::string& name, std::size_t n, double fill) {
        ps.add(name, Tensor::full({n}, fill));
    };
    auto ln_params = [&](const std::string& name) {
        vec(name + ".g", d, 1.0);
        vec(name + ".b", d, 0.0);
    };
    auto attn_params = [&](const std::string& name) {
        for (const char* w : {".wq", ".wk", ".wv", ".wo"}) gauss_mat(name + w, d, d);
        for (const char* b : {".bq", ".bk", ".bv", ".bo"}) vec(name + b, d, 0.0);
    };
    ln_params(prefix + ".ln1");
    attn_params(prefix + ".attn");
    ln_params(prefix + ".ln2");
    if (with_cross) {
        attn_params(prefix + ".xattn");
        ln_params(prefix + ".ln3");
    }
    gauss_mat(prefix + ".ffn.w1", d, 4 * d);
    vec(prefix + ".ffn.b1", 4 * d, 0.0);
    gauss_mat(prefix + ".ffn.w2", 4 * d, d);
    vec(prefix + ".ffn.b2", d, 0.0);
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, const RngStream& root) {
    cfg.validate();
    ParamStore ps;
    std::size_t d = cfg.embed_dim;
    auto gauss_mat = [&](const std::string& name, std::size_t r, std::size_t c) {
        RngStream s = root.fork(name);
        Tensor t = Tensor::zeros({r, c});
        for (double& x : t.values) x = s.gaussian(0.0, 0.02);
        ps.add(name, std::move(t));
    };
    auto vec = [&](const std::string& name, std::size_t n, double fill) {
        ps.add(name, Tensor::full({n}, fill));
    };

    gauss_mat("embed.patch.w", cfg.patch_dim(), d);
    vec("embed.patch.b", d, 0.0);
    gauss_mat("embed.token", cfg.token_table_size(), d);
    gauss_mat("embed.pos_v", cfg.n_patches(), d);
    gauss_mat("embed.pos_l", cfg.max_text_len, d);

    for (std::size_t i = 0; i < cfg.n_layers_v; ++i) {
        add_block_params(cfg, root, ps, "enc_v." + std::to_string(i), false);
    }
    for (std::size_t i = 0; i < cfg.n_layers_l; ++i) {
        add_block_params(cfg, root, ps, "enc_l." + std::to_string(i), false);
    }

    gauss_mat("proj_v.w", d, d);
    vec("proj_v.b", d, 0.0);
    gauss_mat("proj_l.w", d, d);
    vec("proj_l.b", d, 0.0);

    vec("dec_v.mask", d, 0.0);
    gauss_mat("dec_v.pos", cfg.n_patches(), d);
    for (std::size_t i = 0; i < cfg.n_dec_layers; ++i) {
        add_block_params(cfg, root, ps, "dec_v." + std::to_string(i), true);
    }
    gauss_mat("dec_v.head.w", d, cfg.patch_dim());
    vec("dec_v.head.b", cfg.patch_dim(), 0.0);

    gauss_mat("dec_l.w1", 2 * d, d);
    vec("dec_l.b1", d, 0.0);
    gauss_mat("dec_l.w2", d, cfg.token_table_size());
    vec("dec_l.b2", cfg.token_table_size(), 0.0);
    return ps;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
    if (image.rank() != 2) throw ConfigError("patchify: expected rank-2 image");
    std::size_t H = image.shape[0], W = image.shape[1];
    if (patch == 0 || H % patch != 0 || W % patch != 0) {
        throw ConfigError("patchify: patch " + std::to_string(patch) + " must divide " +
                          shape_str(image.shape));
    }
    std::size_t gh = H / patch, gw = W / patch, pd = patch * patch;
    Tensor out = Tensor::zeros({gh * gw, pd});
    for (std::size_t gr = 0; gr < gh; ++gr)
        for (std::size_t gc = 0; gc < gw; ++gc) {
            std::size_t row = gr * gw + gc;
            for (std::size_t r = 0; r < patch; ++r)
                for (std::size_t c = 0; c < patch; ++c)
                    out.values[row * pd + r * patch + c] =
                        image.values[(gr * patch + r) * W + gc * patch + c];
        }
    return out;
}

Tensor unpatchify(const Tensor& grid, std::size_t image_h, std::size_t image_w, std::size_t patch) {
    if (grid.rank() != 2) throw ConfigError("unpatchify: expected rank-2 grid");
    std::size_t gh = image_h / patch, gw = image_w / patch, pd = patch * patch;
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0 || grid.rows() != gh * gw ||
        grid.cols() != pd) {
        throw ConfigError("unpatchify: grid " + shape_str(grid.shape) + " does not tile " +
                          std::to_string(image_h) + "x" + std::to_string(image_w) + " with patch " +
                          std::to_string(patch));
    }
    Tensor out = Tensor::zeros({image_h, image_w});
    for (std::size_t gr = 0; gr < gh; ++gr)
        for (std::size_t gc = 0; gc < gw; ++gc) {
            std::size_t row = gr * gw + gc;
            for (std::size_t r = 0; r < patch; ++r)
                for (std::size_t c = 0; c < patch; ++c)
                    out.values[(gr * patch + r) * image_w + gc * patch + c] =
                        grid.values[row * pd + r * patch + c];
        }
    return out;
}

ImageEncoding encode_image(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                           const MaskedImage& masked) {
    cfg.validate();
    ImageEncoding out;
    out.visible_indices = masked.visible_indices;
    out.n_visible = masked.visible_indices.size();
    if (out.n_visible == 0) return out;  // empty sequence: no tensors exist
    if (masked.total_patches != cfg.n_patches()) {
        throw ConfigError("encode_image: grid has " + std::to_string(masked.total_patches) +
                          " patches, model expects " + std::to_string(cfg.n_patches()));
    }
    const Tensor& vis = *masked.visible;
    if (vis.cols() != cfg.patch_dim()) {
        throw ConfigError("encode_image: patch dim " + std::to_string(vis.cols()) + " vs model " +
                          std::to_string(cfg.patch_dim()));
    }
    Var x = t.add_rowvec(t.matmul(t.constant(vis), t.param(p, "embed.patch.w")),
                         t.param(p, "embed.patch.b"));
    x = t.add(x, t.gather_rows(t.param(p, "embed.pos_v"), masked.visible_indices));
    out.layers.reserve(cfg.n_layers_v);
    for (std::size_t i = 0; i < cfg.n_layers_v; ++i) {
        x = encoder_block(t, p, cfg, "enc_v." + std::to_string(i), x);
        out.layers.push_back(x);
    }
    return out;
}

std::vector<Var> encode_text(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                             const std::vector<int>& tokens) {
    cfg.validate();
    if (tokens.empty() || tokens[0] != kClsId) {
        throw ConfigError("encode_text: token sequence must start with CLS");
    }
    if (tokens.size() > cfg.max_text_len) {
        throw ConfigError("encode_text: length " + std::to_string(tokens.size()) +
                          " exceeds max_text_len " + std::to_string(cfg.max_text_len));
    }
    std::vector<std::size_t> rows;
    rows.reserve(tokens.size());
    for (int id : tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.token_table_size()) {
            throw ConfigError("encode_text: token id " + std::to_string(id) +
                              " outside table of " + std::to_string(cfg.token_table_size()));
        }
        rows.push_back(static_cast<std::size_t>(id));
    }
    std::vector<std::size_t> pos_rows(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) pos_rows[i] = i;

    Var x = t.add(t.gather_rows(t.param(p, "embed.token"), rows),
                  t.gather_rows(t.param(p, "embed.pos_l"), pos_rows));
    std::vector<Var> layers;
    layers.reserve(cfg.n_layers_l);
    for (std::size_t i = 0; i < cfg.n_layers_l; ++i) {
        x = encoder_block(t, p, cfg, "enc_l." + std::to_string(i), x);
        layers.push_back(x);
    }
    return layers;
}

Latents project_and_pool(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                         const ImageEncoding& img, const std::vector<Var>& txt_layers) {
    if (txt_layers.size() != cfg.n_layers_l) {
        throw ConfigError("project_and_pool: expected " + std::to_string(cfg.n_layers_l) +
                          " text layers, got " + std::to_string(txt_layers.size()));
    }
    Latents lat;
    if (img.n_visible > 0) {
        if (img.layers.size() != cfg.n_layers_v) {
            throw ConfigError("project_and_pool: expected " + std::to_string(cfg.n_layers_v) +
                              " image layers, got " + std::to_string(img.layers.size()));
        }
        Var hv = img.layers[cfg.expose_layer_v - 1];
        lat.zv_seq = t.add_rowvec(t.matmul(hv, t.param(p, "proj_v.w")), t.param(p, "proj_v.b"));
        lat.z_v = t.mean_rows(*lat.zv_seq);
    } else {
        lat.z_v = t.zeros_const({cfg.embed_dim});
    }
    lat.zl_seq = t.add_rowvec(t.matmul(txt_layers.back(), t.param(p, "proj_l.w")),
                              t.param(p, "proj_l.b"));
    lat.z_l = t.row_at(lat.zl_seq, 0);
    lat.z = t.scale(t.add(lat.z_v, lat.z_l), 0.5);
    return lat;
}

Var decode_image(Tape& t, const ParamStore& p, const ModelConfig& cfg, const Latents& lat,
                 const std::vector<std::size_t>& visible_indices, std::optional<Var> text_seq) {
    std::size_t n = cfg.n_patches();
    Var grid = t.assemble_rows(lat.zv_seq, t.param(p, "dec_v.mask"), visible_indices, n);
    grid = t.add(grid, t.param(p, "dec_v.pos"));
    for (std::size_t i = 0; i < cfg.n_dec_layers; ++i) {
        grid = decoder_block(t, p, cfg, "dec_v." + std::to_string(i), grid, text_seq);
    }
    return t.add_rowvec(t.matmul(grid, t.param(p, "dec_v.head.w")), t.param(p, "dec_v.head.b"));
}

Var decode_text(Tape& t, const ParamStore& p, const ModelConfig& cfg, const Latents& lat,
                const std::vector<std::size_t>& masked_positions) {
    if (masked_positions.empty()) {
        throw ConfigError("decode_text: no masked positions (caller must skip)");
    }
    std::size_t seq_len = t.val(lat.zl_seq).rows();
    for (std::size_t pos : masked_positions) {
        if (pos >= seq_len) {
            throw ConfigError("decode_text: position " + std::to_string(pos) +
                              " out of range for length " + std::to_string(seq_len));
        }
    }
    std::size_t d = cfg.embed_dim;
    Var q = t.gather_rows(lat.zl_seq, masked_positions);  // [m, d]
    Var pooled;
    if (lat.zv_seq.has_value()) {
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
        Var scores = t.scale(t.matmul_nt(q, *lat.zv_seq), inv_sqrt);
        Var attn = t.softmax_rows(scores);
        pooled = t.matmul(attn, *lat.zv_seq);
    } else {
        pooled = t.zeros_const({masked_positions.size(), d});
    }
    Var x = t.concat_cols({q, pooled});  // [m, 2d]
    Var hmid = t.gelu(t.add_rowvec(t.matmul(x, t.param(p, "dec_l.w1")), t.param(p, "dec_l.b1")));
    return t.add_rowvec(t.matmul(hmid, t.param(p, "dec_l.w2")), t.param(p, "dec_l.b2"));
}

SampleEmbedding embed_sample(const ParamStore& p, const ModelConfig& cfg, const Tensor& image,
                             const std::vector<int>& tokens) {
    Tape t;
    Tensor grid = patchify(image, cfg.patch);
    MaskPlan empty_plan;
    MaskedImage full = apply_image_mask(grid, empty_plan);
    ImageEncoding img = encode_image(t, p, cfg, full);
    std::vector<Var> txt = encode_text(t, p, cfg, tokens);
    Latents lat = project_and_pool(t, p, cfg, img, txt);
    SampleEmbedding out;
    out.z_v = t.val(lat.z_v);
    out.z_l = t.val(lat.z_l);
    out.z = t.val(lat.z);
    return out;
}

}  // namespace rmm

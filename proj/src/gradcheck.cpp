#include "rmm/gradcheck.hpp"

#include <functional>

#include "rmm/corpus.hpp"
#include "rmm/fd.hpp"

namespace rmm {

namespace {

struct CheckSample {
    MaskedImage masked_image;
    MaskedText masked_text;
    std::vector<std::size_t> masked_positions;
    Tensor clean_features;
    PairKey key;
};

struct CheckCase {
    ModelConfig cfg;
    PerceptualExtractor phi;
    std::vector<CheckSample> samples;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// Reduced geometry: 8x8 image / patch 4 -> 4 patches, 12 content ids,
// 2 classes x 2 domains x 1 sample, short texts, dim 8 with 2 heads.
CheckCase build_case(std::uint64_t seed) {
    CorpusSpec cs;
    cs.n_classes = 2;
    cs.n_domains = 2;
    cs.samples_per_cell = 1;
    cs.image_h = 8;
    cs.image_w = 8;
    cs.patch = 4;
    cs.vocab = 12;
    cs.tokens_per_class = 2;
    cs.style_pool_size = 1;
    cs.text_len_min = 4;
    cs.text_len_max = 6;
    cs.validate();

    CheckCase out;
    out.cfg.embed_dim = 8;
    out.cfg.n_heads = 2;
    out.cfg.n_layers_v = 1;
    out.cfg.n_layers_l = 1;
    out.cfg.expose_layer_v = 1;
    out.cfg.n_dec_layers = 1;
    out.cfg.image_h = cs.image_h;
    out.cfg.image_w = cs.image_w;
    out.cfg.patch = cs.patch;
    out.cfg.vocab = cs.vocab;
    out.cfg.max_text_len = cs.text_len_max + 1;
    out.cfg.validate();
    out.phi = make_perceptual_extractor(out.cfg);

    CorruptionSpec corr;
    corr.severity = 0.5;
    corr.lexicons = cs.class_lexicons();
    corr.vocab = cs.vocab;
    MaskBounds bounds;

    std::vector<PairedSample> corpus = generate_corpus(cs, seed);
    RngStream root(seed, "gradcheck");
    for (const PairedSample& s : corpus) {
        RngStream st = root.fork(s.id);
        RngStream img_rng = st.fork("img");
        RngStream txt_rng = st.fork("txt");
        Tensor pert_img = perturb_image(s.image, corr, img_rng);
        std::vector<int> pert_tokens = perturb_text(s.tokens, corr, txt_rng);
        RngStream mask_rng = st.fork("mask");
        MaskPlan plan =
            sample_mask_plan(mask_rng, out.cfg.n_patches(), pert_tokens.size(), bounds);

        CheckSample csmp;
        csmp.masked_image = apply_image_mask(patchify(pert_img, out.cfg.patch), plan);
        csmp.masked_text = apply_text_mask(pert_tokens, plan);
        for (std::size_t p = 0; p < csmp.masked_text.tokens.size(); ++p) {
            if (csmp.masked_text.tokens[p] == kMaskId) csmp.masked_positions.push_back(p);
        }
        csmp.clean_features = perceptual_features(out.phi, patchify(s.image, out.cfg.patch));
        csmp.key.class_label = s.class_label;
        csmp.key.domain = s.domain;
        csmp.key.tokens = s.tokens;
        out.samples.push_back(std::move(csmp));
    }
    std::vector<PairKey> keys;
    for (const CheckSample& s : out.samples) keys.push_back(s.key);
    out.pairs = similar_pairs(keys, PairMode::label, 0.5);
    return out;
}

enum class Term { image_l1, image_l2sq, text, domain, resilience, total };

// Shared forward pass; each term reads off the piece it needs so the graph
// structure is identical between the analytic and FD evaluations.
Var forward_term(Tape& tape, const ParamStore& params, const CheckCase& cc, Term term) {
    const ModelConfig& cfg = cc.cfg;
    std::size_t n = cc.samples.size();
    std::vector<Latents> lats(n);
    Var img_acc, txt_acc;
    bool have_img = false, have_txt = false;
    std::size_t total_masked = 0;
    ImageLossMode mode = term == Term::image_l2sq ? ImageLossMode::l2sq : ImageLossMode::l1;
    for (std::size_t j = 0; j < n; ++j) {
        const CheckSample& s = cc.samples[j];
        ImageEncoding enc_v = encode_image(tape, params, cfg, s.masked_image);
        std::vector<Var> enc_l = encode_text(tape, params, cfg, s.masked_text.tokens);
        lats[j] = project_and_pool(tape, params, cfg, enc_v, enc_l);
        Var recon =
            decode_image(tape, params, cfg, lats[j], enc_v.visible_indices, lats[j].zl_seq);
        Var li = loss_image(tape, cc.phi, recon, s.clean_features, mode);
        img_acc = have_img ? tape.add(img_acc, li) : li;
        have_img = true;
        if (!s.masked_text.targets.empty()) {
            Var logits = decode_text(tape, params, cfg, lats[j], s.masked_positions);
            Var nll = tape.masked_nll_sum(logits, s.masked_text.targets, kFirstContentId);
            txt_acc = have_txt ? tape.add(txt_acc, nll) : nll;
            have_txt = true;
            total_masked += s.masked_text.targets.size();
        }
    }
    Var l_img = tape.scale(img_acc, 1.0 / static_cast<double>(n));
    Var l_txt = have_txt ? tape.scale(txt_acc, 1.0 / static_cast<double>(total_masked))
                         : tape.zeros_const({1});
    std::vector<Var> fused;
    for (const Latents& l : lats) fused.push_back(l.z);
    Var l_dom = loss_domain(tape, fused, cc.pairs);
    Var l_res = loss_resilience(tape, lats);
    switch (term) {
        case Term::image_l1:
        case Term::image_l2sq:
            return l_img;
        case Term::text:
            return l_txt;
        case Term::domain:
            return l_dom;
        case Term::resilience:
            return l_res;
        case Term::total:
            break;
    }
    LossWeights w;
    return tape.add(tape.add(tape.scale(l_img, w.image), tape.scale(l_txt, w.text)),
                    tape.add(tape.scale(l_dom, w.domain), tape.scale(l_res, w.resilience)));
}

GradCheckResult check_term(const CheckCase& cc, const ParamStore& params, Term term,
                           const std::string& name) {
    Tape tape;
    Var loss = forward_term(tape, params, cc, term);
    GradMap analytic = tape.backward(loss, params);
    auto f = [&cc, term](const ParamStore& p) {
        Tape t;
        return t.scalar(forward_term(t, p, cc, term));
    };
    GradMap fd = fd_gradient(f, params, kGradCheckEps);
    GradCheckResult r;
    r.term = name;
    r.max_rel = max_grad_rel_error(analytic, fd);
    r.n_params = params.total_scalars();
    return r;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed) {
    CheckCase cc = build_case(seed);
    ParamStore params = init_params(cc.cfg, RngStream(seed, "init"));
    std::vector<GradCheckResult> out;
    out.push_back(check_term(cc, params, Term::image_l1, "image_l1"));
    out.push_back(check_term(cc, params, Term::image_l2sq, "image_l2sq"));
    out.push_back(check_term(cc, params, Term::text, "text"));
    out.push_back(check_term(cc, params, Term::domain, "domain"));
    out.push_back(check_term(cc, params, Term::resilience, "resilience"));
    out.push_back(check_term(cc, params, Term::total, "total"));
    return out;
}

}  // namespace rmm

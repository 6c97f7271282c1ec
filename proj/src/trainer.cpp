#include "rmm/trainer.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "rmm/config_json.hpp"

namespace rmm {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (lr_encoder < 0.0 || lr_head < 0.0) throw ConfigError("train: learning rates must be >= 0");
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
        throw ConfigError("train: warmup_ratio must lie in [0,1]");
    }
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train: betas must lie in [0,1)");
    }
    if (adam_eps <= 0.0) throw ConfigError("train: adam_eps must be positive");
    if (!(jaccard_tau >= 0.0 && jaccard_tau <= 1.0)) {
        throw ConfigError("train: jaccard_tau must lie in [0,1]");
    }
    weights.validate();
    // total_steps 0 is the initialize-only degenerate run; negatives cannot
    // be represented.
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr) {
    if (total_steps < 1) throw ConfigError("lr_at: total_steps must be >= 1");
    if (step > total_steps) {
        throw ConfigError("lr_at: step " + std::to_string(step) + " beyond total " +
                          std::to_string(total_steps));
    }
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
        throw ConfigError("lr_at: warmup_ratio must lie in [0,1]");
    }
    if (base_lr < 0.0) throw ConfigError("lr_at: base_lr must be >= 0");
    std::size_t warm = static_cast<std::size_t>(
        round_half_away(warmup_ratio * static_cast<double>(total_steps)));
    if (step <= warm && warm > 0) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warm);
    }
    if (warm >= total_steps) return base_lr;  // all-warmup edge
    return base_lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warm);
}

bool is_head_param(const std::string& name) {
    return name.starts_with("proj_v.") || name.starts_with("proj_l.") ||
           name.starts_with("dec_v.") || name.starts_with("dec_l.");
}

void adamw_step(ParamStore& params, const GradMap& grads, OptimState& st, const AdamHyper& hy) {
    st.t += 1;
    double bc1 = 1.0 - std::pow(hy.beta1, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(hy.beta2, static_cast<double>(st.t));
    for (const auto& [name, g] : grads) {
        Tensor& theta = params.get_mutable(name);
        if (!theta.same_shape(g)) {
            throw ContractError("adamw_step: gradient shape mismatch on '" + name + "'");
        }
        Tensor& m = st.m.try_emplace(name, Tensor::zeros(theta.shape)).first->second;
        Tensor& v = st.v.try_emplace(name, Tensor::zeros(theta.shape)).first->second;
        double lr = is_head_param(name) ? hy.lr_head : hy.lr_encoder;
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            double gi = g.values[i];
            m.values[i] = hy.beta1 * m.values[i] + (1.0 - hy.beta1) * gi;
            v.values[i] = hy.beta2 * v.values[i] + (1.0 - hy.beta2) * gi * gi;
            double mhat = m.values[i] / bc1;
            double vhat = v.values[i] / bc2;
            theta.values[i] -= lr * (mhat / (std::sqrt(vhat) + hy.eps) +
                                     hy.weight_decay * theta.values[i]);
        }
    }
}

void check_corpus(const std::vector<PairedSample>& corpus, const ModelConfig& cfg) {
    for (const PairedSample& s : corpus) {
        if (s.image.rank() != 2 || s.image.shape[0] != cfg.image_h || s.image.shape[1] != cfg.image_w) {
            throw DataError("sample '" + s.id + "': image " + shape_str(s.image.shape) +
                            " does not match model " + std::to_string(cfg.image_h) + "x" +
                            std::to_string(cfg.image_w));
        }
        if (s.tokens.empty() || s.tokens[0] != kClsId) {
            throw DataError("sample '" + s.id + "': tokens must start with CLS");
        }
        if (s.tokens.size() > cfg.max_text_len) {
            throw DataError("sample '" + s.id + "': " + std::to_string(s.tokens.size()) +
                            " tokens exceed max_text_len " + std::to_string(cfg.max_text_len));
        }
        for (int tok : s.tokens) {
            if (tok < 0 || static_cast<std::size_t>(tok) >= cfg.token_table_size()) {
                throw DataError("sample '" + s.id + "': token id " + std::to_string(tok) +
                                " outside table of " + std::to_string(cfg.token_table_size()));
            }
        }
    }
}

namespace {

struct PreparedSample {
    const PairedSample* src = nullptr;
    MaskedImage masked_image;
    MaskedText masked_text;
    Tensor clean_features;  // perceptual features of the clean patch grid
};

bool has_cross_domain_pair(const std::vector<PairedSample>& corpus,
                           const std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = i + 1; j < idx.size(); ++j) {
            const PairedSample& a = corpus[idx[i]];
            const PairedSample& b = corpus[idx[j]];
            if (a.class_label == b.class_label && a.domain != b.domain) return true;
        }
    }
    return false;
}

}  // namespace

TrainResult train_run(const TrainConfig& tc, const ModelConfig& mc, const CorruptionSpec& corruption,
                      const MaskBounds& bounds, const std::vector<PairedSample>& corpus,
                      std::uint64_t seed, const std::optional<ResumeState>& resume,
                      std::optional<std::size_t> halt_step) {
    tc.validate();
    mc.validate();
    corruption.validate();
    bounds.validate();
    if (corpus.empty()) throw DataError("train: corpus is empty");
    check_corpus(corpus, mc);

    RngStream root(seed, "train");
    TrainResult res;
    if (resume.has_value()) {
        res.params = resume->params;
        res.optim = resume->optim;
        res.step = resume->step;
    } else {
        res.params = init_params(mc, root.fork("init"));
    }
    res.log_lines.push_back(kTrainLogHeader);

    PerceptualExtractor phi = make_perceptual_extractor(mc);
    std::map<std::string, Tensor> clean_feature_cache;

    CorruptionSpec eff_corr = corruption;
    MaskBounds eff_bounds = bounds;
    if (!tc.robust_masking) {
        eff_corr.severity = 0.0;
        eff_bounds.image_lo = eff_bounds.image_hi = 0.5;
        eff_bounds.text_lo = eff_bounds.text_hi = 0.3;
    }

    std::size_t n = corpus.size();
    std::map<std::size_t, std::vector<std::size_t>> epoch_orders;
    auto order_for = [&](std::size_t epoch) -> const std::vector<std::size_t>& {
        auto it = epoch_orders.find(epoch);
        if (it != epoch_orders.end()) return it->second;
        std::vector<std::size_t> ord(n);
        for (std::size_t i = 0; i < n; ++i) ord[i] = i;
        RngStream s = root.fork("data").fork("epoch" + std::to_string(epoch));
        s.shuffle(ord);
        return epoch_orders.emplace(epoch, std::move(ord)).first->second;
    };

    std::size_t stop = tc.total_steps;
    if (halt_step.has_value()) stop = std::min(stop, *halt_step);

    for (std::size_t step = res.step; step < stop; ++step) {
        std::string step_label = "step" + std::to_string(step);

        // ---- batch selection ----
        std::vector<std::size_t> batch_idx(tc.batch_size);
        for (std::size_t j = 0; j < tc.batch_size; ++j) {
            std::size_t g = step * tc.batch_size + j;
            batch_idx[j] = order_for(g / n)[g % n];
        }
        if (tc.domain_consistency && !has_cross_domain_pair(corpus, batch_idx)) {
            RngStream pf = root.fork("pairfix").fork(step_label);
            for (int attempt = 0; attempt < 10; ++attempt) {
                std::vector<std::size_t> cand(tc.batch_size);
                for (std::size_t j = 0; j < tc.batch_size; ++j) {
                    cand[j] = static_cast<std::size_t>(
                        pf.uniform_int(0, static_cast<std::int64_t>(n) - 1));
                }
                if (has_cross_domain_pair(corpus, cand)) {
                    batch_idx = std::move(cand);
                    break;
                }
            }
        }

        // ---- corruption + masking (plain tensor work) ----
        std::vector<PreparedSample> prepared(tc.batch_size);
        for (std::size_t j = 0; j < tc.batch_size; ++j) {
            const PairedSample& s = corpus[batch_idx[j]];
            PreparedSample& ps = prepared[j];
            ps.src = &s;
            RngStream cstream = root.fork("corrupt").fork(step_label).fork(s.id);
            RngStream img_rng = cstream.fork("img");
            RngStream txt_rng = cstream.fork("txt");
            Tensor pert_img = perturb_image(s.image, eff_corr, img_rng);
            std::vector<int> pert_tokens = perturb_text(s.tokens, eff_corr, txt_rng);
            RngStream mstream = root.fork("mask").fork(step_label).fork(s.id);
            MaskPlan plan = sample_mask_plan(mstream, mc.n_patches(), pert_tokens.size(), eff_bounds);
            ps.masked_image = apply_image_mask(patchify(pert_img, mc.patch), plan);
            ps.masked_text = apply_text_mask(pert_tokens, plan);
            auto fit = clean_feature_cache.find(s.id);
            if (fit == clean_feature_cache.end()) {
                Tensor feat = perceptual_features(phi, patchify(s.image, mc.patch));
                fit = clean_feature_cache.emplace(s.id, std::move(feat)).first;
            }
            ps.clean_features = fit->second;
        }

        // ---- forward ----
        Tape tape;
        std::vector<Latents> lats(tc.batch_size);
        Var img_acc, txt_acc;
        bool have_img = false, have_txt = false;
        std::size_t total_masked_tokens = 0;
        for (std::size_t j = 0; j < tc.batch_size; ++j) {
            PreparedSample& ps = prepared[j];
            ImageEncoding enc_v = encode_image(tape, res.params, mc, ps.masked_image);
            std::vector<Var> enc_l = encode_text(tape, res.params, mc, ps.masked_text.tokens);
            lats[j] = project_and_pool(tape, res.params, mc, enc_v, enc_l);

            Var recon = decode_image(tape, res.params, mc, lats[j], enc_v.visible_indices,
                                     lats[j].zl_seq);
            Var li = loss_image(tape, phi, recon, ps.clean_features, tc.image_loss);
            img_acc = have_img ? tape.add(img_acc, li) : li;
            have_img = true;

            if (!ps.masked_text.targets.empty()) {
                std::vector<std::size_t> positions;
                for (std::size_t p = 0; p < ps.masked_text.tokens.size(); ++p) {
                    if (ps.masked_text.tokens[p] == kMaskId) positions.push_back(p);
                }
                Var logits = decode_text(tape, res.params, mc, lats[j], positions);
                Var nll = tape.masked_nll_sum(logits, ps.masked_text.targets, kFirstContentId);
                txt_acc = have_txt ? tape.add(txt_acc, nll) : nll;
                have_txt = true;
                total_masked_tokens += ps.masked_text.targets.size();
            }
        }

        Var l_img = tape.scale(img_acc, 1.0 / static_cast<double>(tc.batch_size));
        Var l_txt = have_txt ? tape.scale(txt_acc, 1.0 / static_cast<double>(total_masked_tokens))
                             : tape.zeros_const({1});

        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        Var l_dom;
        if (tc.domain_consistency) {
            std::vector<PairKey> keys(tc.batch_size);
            std::vector<Var> fused(tc.batch_size);
            for (std::size_t j = 0; j < tc.batch_size; ++j) {
                keys[j].class_label = prepared[j].src->class_label;
                keys[j].domain = prepared[j].src->domain;
                keys[j].tokens = prepared[j].src->tokens;
                fused[j] = lats[j].z;
            }
            pairs = similar_pairs(keys, tc.pair_mode, tc.jaccard_tau);
            l_dom = loss_domain(tape, fused, pairs);
        } else {
            l_dom = tape.zeros_const({1});
        }

        Var l_res = tc.modality_resilience ? loss_resilience(tape, lats) : tape.zeros_const({1});

        Var total = tape.add(
            tape.add(tape.scale(l_img, tc.weights.image), tape.scale(l_txt, tc.weights.text)),
            tape.add(tape.scale(l_dom, tc.weights.domain), tape.scale(l_res, tc.weights.resilience)));

        LossBreakdown bd;
        bd.image = tape.scalar(l_img);
        bd.text = tape.scalar(l_txt);
        bd.domain = tape.scalar(l_dom);
        bd.resilience = tape.scalar(l_res);
        bd.total = tape.scalar(total);
        bd.n_masked_tokens = total_masked_tokens;
        bd.n_dom_pairs = pairs.size();
        if (!std::isfinite(bd.total) || !std::isfinite(bd.image) || !std::isfinite(bd.text) ||
            !std::isfinite(bd.domain) || !std::isfinite(bd.resilience)) {
            throw NumericalError("step " + std::to_string(step) + ": non-finite loss (image=" +
                                 format_double(bd.image) + ", text=" + format_double(bd.text) +
                                 ", domain=" + format_double(bd.domain) + ", resilience=" +
                                 format_double(bd.resilience) + ")");
        }

        // ---- update ----
        GradMap grads = tape.backward(total, res.params);
        AdamHyper hy;
        hy.lr_encoder = lr_at(step, tc.total_steps, tc.warmup_ratio, tc.lr_encoder);
        hy.lr_head = lr_at(step, tc.total_steps, tc.warmup_ratio, tc.lr_head);
        hy.beta1 = tc.beta1;
        hy.beta2 = tc.beta2;
        hy.eps = tc.adam_eps;
        hy.weight_decay = tc.weight_decay;
        adamw_step(res.params, grads, res.optim, hy);

        res.log_lines.push_back(
            std::to_string(step) + "," + format_double(hy.lr_encoder) + "," +
            format_double(hy.lr_head) + "," + format_double(bd.image) + "," +
            format_double(bd.text) + "," + format_double(bd.domain) + "," +
            format_double(bd.resilience) + "," + format_double(bd.total) + "," +
            std::to_string(bd.n_masked_tokens) + "," + std::to_string(bd.n_dom_pairs));
        res.history.push_back(bd);
        res.step = step + 1;
    }
    return res;
}

// ---- checkpointing ----

namespace {

nlohmann::ordered_json tensor_to_json(const Tensor& t) {
    nlohmann::ordered_json j;
    j["shape"] = t.shape;
    j["values"] = t.values;
    return j;
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& what) {
    try {
        auto shape = j.at("shape").get<std::vector<std::size_t>>();
        auto values = j.at("values").get<std::vector<double>>();
        return Tensor(std::move(shape), std::move(values));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: bad tensor for " + what + " (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw DataError("checkpoint: bad tensor for " + what + " (" + std::string(e.what()) + ")");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["format_version"] = "1";
    j["step"] = ckpt.step;
    j["seed"] = ckpt.seed;
    j["model"] = model_to_json(ckpt.model);
    j["train"] = train_to_json(ckpt.train, ckpt.bounds);
    j["corruption"] = corruption_to_json(ckpt.corruption);
    nlohmann::ordered_json params;
    for (const auto& [name, t] : ckpt.params) params[name] = tensor_to_json(t);
    j["params"] = std::move(params);
    nlohmann::ordered_json optim;
    optim["t"] = ckpt.optim.t;
    nlohmann::ordered_json mj, vj;
    for (const auto& [name, t] : ckpt.optim.m) mj[name] = tensor_to_json(t);
    for (const auto& [name, t] : ckpt.optim.v) vj[name] = tensor_to_json(t);
    optim["m"] = std::move(mj);
    optim["v"] = std::move(vj);
    j["optim"] = std::move(optim);
    // Stream bookkeeping: labels are derived from the absolute step, so the
    // completed-step count summarizes every concern's position.
    j["rng_counters"] = {{"data", ckpt.step}, {"corrupt", ckpt.step}, {"mask", ckpt.step},
                         {"pairfix", ckpt.step}};

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << j.dump(1) << "\n";
    if (!f) throw DataError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "': invalid JSON (" + e.what() + ")");
    }
    Checkpoint ckpt;
    try {
        std::string ver = j.at("format_version").get<std::string>();
        if (ver != "1") {
            throw DataError("checkpoint '" + path + "': unsupported format_version '" + ver + "'");
        }
        ckpt.step = j.at("step").get<std::size_t>();
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        model_from_json(j.at("model"), "model", ckpt.model, true);
        train_from_json(j.at("train"), "train", ckpt.train, ckpt.bounds);
        corruption_from_json(j.at("corruption"), "corruption", ckpt.corruption);
        for (const auto& [name, tj] : j.at("params").items()) {
            ckpt.params.add(name, tensor_from_json(tj, "param '" + name + "'"));
        }
        const auto& oj = j.at("optim");
        ckpt.optim.t = oj.at("t").get<std::size_t>();
        for (const auto& [name, tj] : oj.at("m").items()) {
            ckpt.optim.m.emplace(name, tensor_from_json(tj, "moment m of '" + name + "'"));
        }
        for (const auto& [name, tj] : oj.at("v").items()) {
            ckpt.optim.v.emplace(name, tensor_from_json(tj, "moment v of '" + name + "'"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "': missing or mistyped field (" + e.what() + ")");
    }
    return ckpt;
}

}  // namespace rmm

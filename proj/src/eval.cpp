#include "rmm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace rmm {

void EvalConfig::validate() const {
    if (!(probe_train_fraction > 0.0 && probe_train_fraction < 1.0)) {
        throw ConfigError("eval: probe_train_fraction must lie in (0,1)");
    }
    if (probe_iters == 0) throw ConfigError("eval: probe_iters must be >= 1");
    if (probe_lr <= 0.0) throw ConfigError("eval: probe_lr must be positive");
    if (probe_l2 < 0.0) throw ConfigError("eval: probe_l2 must be >= 0");
    if (sweep_severities.empty()) throw ConfigError("eval: sweep_severities must be non-empty");
    for (std::size_t i = 0; i < sweep_severities.size(); ++i) {
        double s = sweep_severities[i];
        if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("eval: sweep severities must lie in [0,1]");
        if (i > 0 && s < sweep_severities[i - 1]) {
            throw ConfigError("eval: sweep severities must be sorted ascending");
        }
    }
    if (retrieval_ks.empty()) throw ConfigError("eval: retrieval_ks must be non-empty");
    for (std::size_t k : retrieval_ks) {
        if (k == 0) throw ConfigError("eval: retrieval k must be >= 1");
    }
    if (!(retrieval_severity >= 0.0 && retrieval_severity <= 1.0)) {
        throw ConfigError("eval: retrieval_severity must lie in [0,1]");
    }
}

std::vector<EmbeddedSample> embed_corpus(const ParamStore& params, const ModelConfig& cfg,
                                         const std::vector<PairedSample>& corpus,
                                         const CorruptionSpec& corruption, double severity,
                                         std::uint64_t seed) {
    if (!(severity >= 0.0 && severity <= 1.0)) {
        throw ConfigError("embed_corpus: severity must lie in [0,1]");
    }
    check_corpus(corpus, cfg);
    CorruptionSpec eff = corruption;
    eff.severity = severity;
    RngStream root(seed, "eval");
    RngStream sev_root = root.fork("sev" + format_double(severity));
    std::vector<EmbeddedSample> out;
    out.reserve(corpus.size());
    for (const PairedSample& s : corpus) {
        Tensor image = s.image;
        std::vector<int> tokens = s.tokens;
        if (severity > 0.0) {
            RngStream ss = sev_root.fork(s.id);
            RngStream img_rng = ss.fork("img");
            RngStream txt_rng = ss.fork("txt");
            image = perturb_image(image, eff, img_rng);
            tokens = perturb_text(tokens, eff, txt_rng);
        }
        SampleEmbedding e = embed_sample(params, cfg, image, tokens);
        out.push_back(EmbeddedSample{s.id, s.class_label, s.domain, std::move(e.z_v),
                                     std::move(e.z_l), std::move(e.z)});
    }
    return out;
}

// ---- linear probe ----

Probe fit_probe(const Tensor& x, const std::vector<int>& labels, std::size_t n_classes,
                const EvalConfig& cfg) {
    cfg.validate();
    if (x.rank() != 2) throw ConfigError("fit_probe: features must be rank 2");
    std::size_t n = x.rows(), d = x.cols();
    if (labels.size() != n) throw ConfigError("fit_probe: label count does not match rows");
    if (n_classes < 2) throw ConfigError("fit_probe: need at least 2 classes");
    std::vector<bool> present(n_classes, false);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw ConfigError("fit_probe: label " + std::to_string(y) + " outside [0," +
                              std::to_string(n_classes) + ")");
        }
        present[static_cast<std::size_t>(y)] = true;
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (!present[c]) {
            throw ConfigError("fit_probe: class " + std::to_string(c) + " absent from training labels");
        }
    }

    Probe probe;
    probe.n_classes = n_classes;
    probe.w = Tensor::zeros({d, n_classes});
    probe.b = Tensor::zeros({n_classes});
    probe.mu = Tensor::zeros({d});
    probe.sd = Tensor::full({d}, 1.0);
    for (std::size_t c = 0; c < d; ++c) {
        double mu = 0.0;
        for (std::size_t r = 0; r < n; ++r) mu += x.at(r, c);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double t = x.at(r, c) - mu;
            var += t * t;
        }
        probe.mu.values[c] = mu;
        probe.sd.values[c] = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
    }
    Tensor xs = x;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            xs.at(r, c) = (xs.at(r, c) - probe.mu.values[c]) / probe.sd.values[c];
        }
    }

    std::vector<double> logits(n_classes);
    Tensor gw = Tensor::zeros({d, n_classes});
    std::vector<double> gb(n_classes);
    for (std::size_t iter = 0; iter < cfg.probe_iters; ++iter) {
        std::fill(gw.values.begin(), gw.values.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = xs.values.data() + i * d;
            for (std::size_t c = 0; c < n_classes; ++c) {
                double s = probe.b.values[c];
                for (std::size_t f = 0; f < d; ++f) s += xi[f] * probe.w.values[f * n_classes + c];
                logits[c] = s;
            }
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) {
                logits[c] = std::exp(logits[c] - mx);
                z += logits[c];
            }
            for (std::size_t c = 0; c < n_classes; ++c) {
                double p = logits[c] / z;
                double delta = p - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0);
                gb[c] += delta;
                for (std::size_t f = 0; f < d; ++f) gw.values[f * n_classes + c] += xi[f] * delta;
            }
        }
        double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < gw.values.size(); ++k) {
            probe.w.values[k] -= cfg.probe_lr * (gw.values[k] * inv_n + 2.0 * cfg.probe_l2 * probe.w.values[k]);
        }
        for (std::size_t c = 0; c < n_classes; ++c) probe.b.values[c] -= cfg.probe_lr * gb[c] * inv_n;
    }
    return probe;
}

double probe_accuracy(const Probe& probe, const Tensor& x, const std::vector<int>& labels) {
    if (x.rank() != 2 || x.cols() != probe.w.rows()) {
        throw ConfigError("probe_accuracy: feature width does not match probe");
    }
    if (labels.size() != x.rows()) throw ConfigError("probe_accuracy: label count mismatch");
    if (labels.empty()) throw ConfigError("probe_accuracy: empty test set");
    std::size_t n = x.rows(), d = x.cols(), C = probe.n_classes;
    std::size_t correct = 0;
    std::vector<double> xi(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            xi[c] = (x.at(i, c) - probe.mu.values[c]) / probe.sd.values[c];
        }
        std::size_t best = 0;
        double best_s = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < C; ++c) {
            double s = probe.b.values[c];
            for (std::size_t f = 0; f < d; ++f) s += xi[f] * probe.w.values[f * C + c];
            if (s > best_s) {  // strict: ties keep the lower index
                best_s = s;
                best = c;
            }
        }
        if (static_cast<std::size_t>(labels[i]) == best) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

ProbeSplit make_split(const std::vector<EmbeddedSample>& embedded, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("make_split: train_fraction must lie in (0,1)");
    }
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < embedded.size(); ++i) {
        cells[{embedded[i].class_label, embedded[i].domain}].push_back(i);
    }
    ProbeSplit split;
    for (auto& [key, idx] : cells) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return embedded[a].id < embedded[b].id;
        });
        std::size_t n_train = static_cast<std::size_t>(
            round_half_away(train_fraction * static_cast<double>(idx.size())));
        n_train = std::min(n_train, idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < n_train ? split.train_idx : split.test_idx).push_back(idx[k]);
        }
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
    return split;
}

double domain_drop(double acc_id_pct, double acc_cd_pct) {
    auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
    if (!in_range(acc_id_pct) || !in_range(acc_cd_pct)) {
        throw ConfigError("domain_drop: accuracies must be percentages in [0,100]");
    }
    return acc_id_pct - acc_cd_pct;
}

// ---- protocols ----

namespace {

Tensor stack_features(const std::vector<EmbeddedSample>& embedded,
                      const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ConfigError("probe protocol: empty index set");
    std::size_t d = embedded[idx[0]].z.shape[0];
    Tensor x = Tensor::zeros({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Tensor& z = embedded[idx[r]].z;
        for (std::size_t c = 0; c < d; ++c) x.values[r * d + c] = z.values[c];
    }
    return x;
}

std::vector<int> class_labels(const std::vector<EmbeddedSample>& embedded,
                              const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (std::size_t i : idx) y.push_back(embedded[i].class_label);
    return y;
}

std::size_t count_classes(const std::vector<PairedSample>& corpus) {
    int mx = -1;
    for (const PairedSample& s : corpus) mx = std::max(mx, s.class_label);
    return static_cast<std::size_t>(mx + 1);
}

}  // namespace

ProbeReport domain_shift_eval(const ParamStore& params, const ModelConfig& cfg,
                              const std::vector<PairedSample>& corpus,
                              const CorruptionSpec& corruption, const EvalConfig& ecfg,
                              std::uint64_t seed) {
    ecfg.validate();
    std::vector<EmbeddedSample> embedded = embed_corpus(params, cfg, corpus, corruption, 0.0, seed);
    ProbeSplit split = make_split(embedded, ecfg.probe_train_fraction);
    std::size_t n_classes = count_classes(corpus);

    // Reference domain 0 trains the probe; its held-out cells give in-domain
    // accuracy, every other domain's held-out cells give cross-domain.
    std::vector<std::size_t> train_ref, test_ref, test_cross;
    for (std::size_t i : split.train_idx) {
        if (embedded[i].domain == 0) train_ref.push_back(i);
    }
    for (std::size_t i : split.test_idx) {
        (embedded[i].domain == 0 ? test_ref : test_cross).push_back(i);
    }
    if (train_ref.empty() || test_ref.empty() || test_cross.empty()) {
        throw ConfigError("domain_shift_eval: corpus needs domain 0 plus at least one other domain");
    }
    Probe probe = fit_probe(stack_features(embedded, train_ref), class_labels(embedded, train_ref),
                            n_classes, ecfg);
    ProbeReport rep;
    rep.acc_id_pct = 100.0 * probe_accuracy(probe, stack_features(embedded, test_ref),
                                            class_labels(embedded, test_ref));
    rep.acc_cd_pct = 100.0 * probe_accuracy(probe, stack_features(embedded, test_cross),
                                            class_labels(embedded, test_cross));
    rep.drop_pct = domain_drop(rep.acc_id_pct, rep.acc_cd_pct);
    return rep;
}

std::vector<SweepRow> perturbation_sweep(const ParamStore& params, const ModelConfig& cfg,
                                         const std::vector<PairedSample>& corpus,
                                         const CorruptionSpec& corruption, const EvalConfig& ecfg,
                                         std::uint64_t seed) {
    ecfg.validate();
    std::vector<EmbeddedSample> clean = embed_corpus(params, cfg, corpus, corruption, 0.0, seed);
    ProbeSplit split = make_split(clean, ecfg.probe_train_fraction);
    std::size_t n_classes = count_classes(corpus);
    Probe probe = fit_probe(stack_features(clean, split.train_idx),
                            class_labels(clean, split.train_idx), n_classes, ecfg);
    std::vector<SweepRow> rows;
    for (double s : ecfg.sweep_severities) {
        std::vector<EmbeddedSample> pert =
            s == 0.0 ? clean : embed_corpus(params, cfg, corpus, corruption, s, seed);
        double acc = probe_accuracy(probe, stack_features(pert, split.test_idx),
                                    class_labels(pert, split.test_idx));
        rows.push_back(SweepRow{s, acc});
    }
    return rows;
}

// ---- retrieval ----

RetrievalMetrics rank_retrieval(const std::vector<Tensor>& queries_v,
                                const std::vector<Tensor>& database_l,
                                const std::vector<std::size_t>& ks) {
    if (queries_v.size() != database_l.size() || queries_v.empty()) {
        throw ConfigError("rank_retrieval: need equal-size non-empty lists");
    }
    for (std::size_t k : ks) {
        if (k == 0) throw ConfigError("rank_retrieval: k must be >= 1");
    }
    std::size_t n = queries_v.size();
    auto norm = [](const Tensor& t) {
        double s = 0.0;
        for (double x : t.values) s += x * x;
        return std::sqrt(s);
    };
    RetrievalMetrics metrics;
    double rank_sum = 0.0;
    std::vector<std::size_t> rank_of(n);
    for (std::size_t q = 0; q < n; ++q) {
        double qn = norm(queries_v[q]);
        std::vector<double> sim(n);
        for (std::size_t j = 0; j < n; ++j) {
            double dn = norm(database_l[j]);
            if (qn == 0.0 || dn == 0.0) {
                sim[j] = -std::numeric_limits<double>::infinity();
                continue;
            }
            if (queries_v[q].shape != database_l[j].shape) {
                throw ConfigError("rank_retrieval: embedding shapes differ");
            }
            double dot = 0.0;
            for (std::size_t f = 0; f < queries_v[q].values.size(); ++f) {
                dot += queries_v[q].values[f] * database_l[j].values[f];
            }
            sim[j] = dot / (qn * dn);
        }
        // 1-based rank of the true pair q: entries strictly better, plus
        // equal-similarity entries with a lower index, come first.
        std::size_t rank = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == q) continue;
            if (sim[j] > sim[q] || (sim[j] == sim[q] && j < q)) ++rank;
        }
        rank_of[q] = rank;
        rank_sum += static_cast<double>(rank);
    }
    for (std::size_t k : ks) {
        std::size_t hits = 0;
        for (std::size_t q = 0; q < n; ++q) {
            if (rank_of[q] <= k) ++hits;
        }
        metrics.recall_at[k] = static_cast<double>(hits) / static_cast<double>(n);
    }
    metrics.mean_rank = rank_sum / static_cast<double>(n);
    return metrics;
}

RetrievalReport retrieval_eval(const ParamStore& params, const ModelConfig& cfg,
                               const std::vector<PairedSample>& corpus,
                               const CorruptionSpec& corruption, const EvalConfig& ecfg,
                               std::uint64_t seed) {
    ecfg.validate();
    auto collect = [](const std::vector<EmbeddedSample>& e) {
        std::pair<std::vector<Tensor>, std::vector<Tensor>> out;
        for (const EmbeddedSample& s : e) {
            out.first.push_back(s.z_v);
            out.second.push_back(s.z_l);
        }
        return out;
    };
    RetrievalReport rep;
    auto [v0, l0] = collect(embed_corpus(params, cfg, corpus, corruption, 0.0, seed));
    rep.standard = rank_retrieval(v0, l0, ecfg.retrieval_ks);
    auto [v1, l1] = collect(
        embed_corpus(params, cfg, corpus, corruption, ecfg.retrieval_severity, seed));
    rep.perturbed = rank_retrieval(v1, l1, ecfg.retrieval_ks);
    rep.delta_mean_rank = rep.perturbed.mean_rank - rep.standard.mean_rank;
    return rep;
}

// ---- ablation ----

std::vector<AblationRow> ablation_suite(const TrainConfig& base, const ModelConfig& cfg,
                                        const CorruptionSpec& corruption, const MaskBounds& bounds,
                                        const std::vector<PairedSample>& corpus,
                                        const EvalConfig& ecfg,
                                        const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("ablation_suite: need at least one seed");
    ecfg.validate();
    constexpr bool grid[4][3] = {
        {false, false, false},
        {true, false, false},
        {true, true, false},
        {true, true, true},
    };
    std::vector<AblationRow> rows;
    for (const auto& toggles : grid) {
        for (std::uint64_t seed : seeds) {
            TrainConfig tc = base;
            tc.robust_masking = toggles[0];
            tc.domain_consistency = toggles[1];
            tc.modality_resilience = toggles[2];
            TrainResult tr = train_run(tc, cfg, corruption, bounds, corpus, seed);

            std::vector<EmbeddedSample> clean =
                embed_corpus(tr.params, cfg, corpus, corruption, 0.0, seed);
            ProbeSplit split = make_split(clean, ecfg.probe_train_fraction);
            Probe probe = fit_probe(stack_features(clean, split.train_idx),
                                    class_labels(clean, split.train_idx), count_classes(corpus), ecfg);
            std::vector<EmbeddedSample> pert =
                embed_corpus(tr.params, cfg, corpus, corruption, kAblationSeverity, seed);
            double acc = probe_accuracy(probe, stack_features(pert, split.test_idx),
                                        class_labels(pert, split.test_idx));
            rows.push_back(AblationRow{toggles[0], toggles[1], toggles[2], seed, acc});
        }
    }
    return rows;
}

}  // namespace rmm

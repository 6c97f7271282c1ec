#pragma once
// Evaluation harness: frozen-encoder embeddings, linear probes, domain-shift
// and severity-sweep accuracy, cross-modal retrieval, and the toggle
// ablation grid.
//
// Probe protocol: fused embeddings, deterministic per-(class,domain)-cell
// split by sample id order, multinomial logistic regression trained by plain
// gradient descent from zero init. The probe always trains on clean
// embeddings; perturbed accuracy perturbs only the test side.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmm/corpus.hpp"
#include "rmm/corruption.hpp"
#include "rmm/model.hpp"
#include "rmm/trainer.hpp"

namespace rmm {

struct EvalConfig {
    double probe_train_fraction = 0.7;
    std::size_t probe_iters = 500;
    double probe_lr = 0.1;
    double probe_l2 = 1e-4;
    std::vector<double> sweep_severities = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::size_t> retrieval_ks = {1, 5, 10};
    double retrieval_severity = 0.5;

    void validate() const;
};

struct EmbeddedSample {
    std::string id;
    int class_label = 0;
    int domain = 0;
    Tensor z_v;
    Tensor z_l;
    Tensor z;
};

// Embeds every sample with no masking. severity > 0 perturbs inputs first,
// with per-sample streams keyed by (seed, severity label, id).
std::vector<EmbeddedSample> embed_corpus(const ParamStore& params, const ModelConfig& cfg,
                                         const std::vector<PairedSample>& corpus,
                                         const CorruptionSpec& corruption, double severity,
                                         std::uint64_t seed);

// ---- linear probe ----

struct Probe {
    Tensor w;   // [dim, n_classes]
    Tensor b;   // [n_classes]
    Tensor mu;  // [dim] train-split feature means
    Tensor sd;  // [dim] train-split feature stddevs, floored at 1e-8
    std::size_t n_classes = 0;
};

// Multinomial logistic regression on standardized features; every class in
// [0, n_classes) must appear in the training labels. Standardization uses
// train-split statistics (stored in the probe, reapplied at scoring time) so
// gradient descent is well conditioned regardless of embedding scale.
// Deterministic: zero init, fixed iteration count.
Probe fit_probe(const Tensor& x, const std::vector<int>& labels, std::size_t n_classes,
                const EvalConfig& cfg);
double probe_accuracy(const Probe& probe, const Tensor& x, const std::vector<int>& labels);

// Train/test membership per sample, deterministic by id order within each
// (class, domain) cell.
struct ProbeSplit {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
};
ProbeSplit make_split(const std::vector<EmbeddedSample>& embedded, double train_fraction);

// Accuracy drop in percentage points; both inputs are percentages.
double domain_drop(double acc_id_pct, double acc_cd_pct);

// ---- protocols ----

struct ProbeReport {
    double acc_id_pct = 0.0;  // train and test on the reference domain (0)
    double acc_cd_pct = 0.0;  // same probe, test on the other domains
    double drop_pct = 0.0;
};
ProbeReport domain_shift_eval(const ParamStore& params, const ModelConfig& cfg,
                              const std::vector<PairedSample>& corpus,
                              const CorruptionSpec& corruption, const EvalConfig& ecfg,
                              std::uint64_t seed);

struct SweepRow {
    double severity = 0.0;
    double accuracy = 0.0;  // fraction in [0,1]
};
std::vector<SweepRow> perturbation_sweep(const ParamStore& params, const ModelConfig& cfg,
                                         const std::vector<PairedSample>& corpus,
                                         const CorruptionSpec& corruption, const EvalConfig& ecfg,
                                         std::uint64_t seed);

// ---- retrieval ----

struct RetrievalMetrics {
    std::map<std::size_t, double> recall_at;
    double mean_rank = 0.0;
};
// Image->text retrieval by cosine similarity; rank ties break toward the
// lower index, zero vectors sort last. Row i of the two lists is a true pair.
RetrievalMetrics rank_retrieval(const std::vector<Tensor>& queries_v,
                                const std::vector<Tensor>& database_l,
                                const std::vector<std::size_t>& ks);

struct RetrievalReport {
    RetrievalMetrics standard;
    RetrievalMetrics perturbed;
    double delta_mean_rank = 0.0;
};
RetrievalReport retrieval_eval(const ParamStore& params, const ModelConfig& cfg,
                               const std::vector<PairedSample>& corpus,
                               const CorruptionSpec& corruption, const EvalConfig& ecfg,
                               std::uint64_t seed);

// ---- ablation ----

struct AblationRow {
    bool robust_masking = false;
    bool domain_consistency = false;
    bool modality_resilience = false;
    std::uint64_t seed = 0;
    double accuracy = 0.0;  // perturbed-probe accuracy at severity 0.5
};

// Train-from-scratch grid over the cumulative toggle rows
// (off/off/off, on/off/off, on/on/off, on/on/on) x seeds.
std::vector<AblationRow> ablation_suite(const TrainConfig& base, const ModelConfig& cfg,
                                        const CorruptionSpec& corruption, const MaskBounds& bounds,
                                        const std::vector<PairedSample>& corpus,
                                        const EvalConfig& ecfg,
                                        const std::vector<std::uint64_t>& seeds);

inline constexpr double kAblationSeverity = 0.5;

}  // namespace rmm

#pragma once
// Pre-training loop: corrupt, mask, reconstruct, step.
//
// Determinism layout: every random decision draws from a stream labeled by
// concern and absolute step, forked from the run root. "data/epoch{e}"
// shuffles the sample order, "corrupt/step{t}/{id}" and "mask/step{t}/{id}"
// drive the per-sample pipelines, "pairfix/step{t}" redraws a batch when
// domain consistency needs at least one cross-domain pair, "init/{param}"
// initializes weights. No stream depends on mutable state, so resuming from
// a checkpoint at step k replays steps k..total bit-exactly.
//
// Toggles: robust_masking off forces severity 0 and fixes the mask ratios at
// r_v = 0.5, r_l = 0.3 (conventional masking); domain_consistency and
// modality_resilience gate their loss terms (a gated-off term logs as 0 and
// contributes 0, keeping total = sum of weighted terms exact).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmm/corpus.hpp"
#include "rmm/corruption.hpp"
#include "rmm/model.hpp"
#include "rmm/objectives.hpp"

namespace rmm {

struct TrainConfig {
    std::size_t total_steps = 500;
    std::size_t batch_size = 16;
    double lr_encoder = 3e-4;  // embeddings + both encoders
    double lr_head = 1e-3;     // projections + both decoders
    double warmup_ratio = 0.10;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights;
    bool robust_masking = true;
    bool domain_consistency = true;
    bool modality_resilience = true;
    PairMode pair_mode = PairMode::label;
    double jaccard_tau = 0.5;
    ImageLossMode image_loss = ImageLossMode::l1;

    void validate() const;
};

// Linear warmup to base over W = round(warmup_ratio * total) steps, then
// linear decay to 0 at total. Defined on steps 0..total inclusive.
double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr);

// Projections and decoders form the fast group; everything else is slow.
bool is_head_param(const std::string& name);

struct AdamHyper {
    double lr_encoder = 0.0;
    double lr_head = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimState {
    std::size_t t = 0;  // completed steps, 1-based inside bias correction
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

// One decoupled-weight-decay update: theta -= lr*(mhat/(sqrt(vhat)+eps) + wd*theta).
void adamw_step(ParamStore& params, const GradMap& grads, OptimState& st, const AdamHyper& hy);

struct LossBreakdown {
    double image = 0.0;
    double text = 0.0;
    double domain = 0.0;
    double resilience = 0.0;
    double total = 0.0;
    std::size_t n_masked_tokens = 0;
    std::size_t n_dom_pairs = 0;
};

struct ResumeState {
    ParamStore params;
    OptimState optim;
    std::size_t step = 0;
};

struct TrainResult {
    ParamStore params;
    OptimState optim;
    std::size_t step = 0;                 // steps completed
    std::vector<std::string> log_lines;   // CSV, header first
    std::vector<LossBreakdown> history;   // one entry per executed step
};

inline constexpr const char* kTrainLogHeader =
    "step,lr_enc,lr_head,l_img,l_txt,l_dom,l_res,l_total,n_masked_tokens,n_dom_pairs";

// Corpus geometry / token range must match the model; DataError names the
// first offending sample.
void check_corpus(const std::vector<PairedSample>& corpus, const ModelConfig& cfg);

// Runs steps [resume.step, min(total_steps, halt_step)). halt_step exists for
// resume-equivalence testing; the log covers only the executed steps.
TrainResult train_run(const TrainConfig& tc, const ModelConfig& mc, const CorruptionSpec& corruption,
                      const MaskBounds& bounds, const std::vector<PairedSample>& corpus,
                      std::uint64_t seed, const std::optional<ResumeState>& resume = {},
                      std::optional<std::size_t> halt_step = {});

// ---- checkpointing ----

struct Checkpoint {
    std::size_t step = 0;
    std::uint64_t seed = 0;
    TrainConfig train;
    ModelConfig model;
    CorruptionSpec corruption;  // severity + operator toggles (lexicons are corpus-derived)
    MaskBounds bounds;
    ParamStore params;
    OptimState optim;
};

// JSON with format_version "1"; doubles serialize shortest-round-trip, so a
// save/load cycle is bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rmm

#pragma once
// Asymmetric corruption and masking.
//
// The image and text sides of a pair are corrupted independently, by design:
// each side gets its own operator chain and its own random stream. A single
// severity knob s in [0,1] scales every operator; s = 0 is the exact identity
// and consumes no draws.
//
// Image chain (fixed order): intensity gain, contrast power, additive noise,
// region removal. Pixels are clamped back to [0,1] after each operator.
//   gain   ~ U[1-0.5s, 1+0.5s]
//   power  ~ U[1-0.5s, 1+0.5s], applied as x^power
//   noise  ~ N(0, (0.25 s)^2) per pixel
//   region: a sqrt(0.3 s)-side fraction rectangle set to 0 at a random spot
//
// Text chain (fixed order): chunk dropout, synonym replacement, truncation.
// The leading CLS is never touched and the output always keeps length >= 2.
//   dropout: with probability p = 0.5 s, one contiguous run of ceil(len/3)
//            tokens is removed (capped so one content token survives)
//   synonym: per-token probability q = 0.3 s, replacement from the token's
//            class lexicon (uniform over the others), or a uniform content id
//            for tokens outside every lexicon
//   truncate: keep the first max(1, round(f * len)) tokens, f = 1 - 0.5 s
//
// Masking samples per-modality ratios independently, r_v ~ U[v_lo,v_hi] over
// patches, r_l ~ U[l_lo,l_hi] over non-CLS positions; counts are
// round-half-away-from-zero of ratio * population.

#include <cstddef>
#include <optional>
#include <vector>

#include "rmm/corpus.hpp"
#include "rmm/rng.hpp"
#include "rmm/tensor.hpp"

namespace rmm {

struct CorruptionSpec {
    // Default chosen so the full objective beats the no-robustness baseline
    // on perturbed accuracy at desk scale without starving clean accuracy.
    double severity = 0.35;
    // image operators
    bool op_intensity = true;
    bool op_contrast = true;
    bool op_noise = true;
    bool op_region = true;
    // text operators
    bool op_dropout = true;
    bool op_synonym = true;
    bool op_truncate = true;
    // synonym context: class lexicons and the content vocab size for the
    // out-of-lexicon fallback draw
    std::vector<std::vector<int>> lexicons;
    std::size_t vocab = 64;

    void validate() const;
};

struct MaskBounds {
    double image_lo = 0.25, image_hi = 0.75;
    double text_lo = 0.15, text_hi = 0.50;
    void validate() const;
};

struct MaskPlan {
    std::vector<std::size_t> image_patches;   // strictly increasing
    std::vector<std::size_t> text_positions;  // strictly increasing, never 0 (CLS)
    double r_v = 0.0;
    double r_l = 0.0;
};

Tensor perturb_image(const Tensor& image, const CorruptionSpec& spec, RngStream& rng);
std::vector<int> perturb_text(const std::vector<int>& tokens, const CorruptionSpec& spec,
                              RngStream& rng);

// Draw order: r_v, r_l, patch subset, position subset.
MaskPlan sample_mask_plan(RngStream& rng, std::size_t n_patches, std::size_t n_tokens,
                          const MaskBounds& bounds);

// Visible remainder of a patch grid. `visible` is absent when the plan masks
// every patch; indices are the grid rows kept, ascending.
struct MaskedImage {
    std::optional<Tensor> visible;
    std::vector<std::size_t> visible_indices;
    std::size_t total_patches = 0;
};
MaskedImage apply_image_mask(const Tensor& patch_grid, const MaskPlan& plan);

// Token sequence with MASK written at planned positions; targets hold the
// overwritten ids in plan order (ascending positions).
struct MaskedText {
    std::vector<int> tokens;
    std::vector<int> targets;
};
MaskedText apply_text_mask(const std::vector<int>& tokens, const MaskPlan& plan);

}  // namespace rmm

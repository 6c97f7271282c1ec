#pragma once
// Dual pre-norm Transformer encoders with cross-conditioned reconstruction
// decoders.
//
// Image side: visible patches -> linear patch embed + positional rows ->
// N_v pre-norm blocks. The projected sequence Z_v comes from layer k_v
// (1-based; shallower layers are exposable on purpose), mean-pooled into z_v.
// Text side: token ids -> token embed + positions -> N_l blocks, projected
// from the last layer; z_l is the CLS row. Fused z = (z_v + z_l)/2; a fully
// masked image contributes a zero z_v.
//
// Image decoder: visible Z_v rows scattered into a full grid around a learned
// mask vector, plus decoder positions; each block runs self-attention,
// cross-attention onto the text sequence (skipped when absent), and an FFN;
// a linear head maps rows to pixel patches. Text decoder: per masked
// position, an MLP over [text token row ; parameter-free attention pool of
// the visible image rows with that token as query].

#include <cstdint>
#include <optional>
#include <vector>

#include "rmm/corruption.hpp"
#include "rmm/graph.hpp"
#include "rmm/param_store.hpp"
#include "rmm/rng.hpp"

namespace rmm {

struct ModelConfig {
    std::size_t embed_dim = 32;
    std::size_t n_heads = 4;
    std::size_t n_layers_v = 2;
    std::size_t n_layers_l = 2;
    std::size_t expose_layer_v = 1;  // k_v, 1-based
    std::size_t n_dec_layers = 1;
    double ln_eps = 1e-5;
    // geometry, filled from the corpus spec
    std::size_t image_h = 24;
    std::size_t image_w = 24;
    std::size_t patch = 4;
    std::size_t vocab = 64;
    std::size_t max_text_len = 25;  // positions incl. CLS

    void validate() const;

    std::size_t n_patches() const { return (image_h / patch) * (image_w / patch); }
    std::size_t patch_dim() const { return patch * patch; }
    std::size_t token_table_size() const { return vocab + 3; }
};

// Gaussian(0, 0.02) matrices, zero vectors, unit LayerNorm gains. Each
// parameter draws from its own name-keyed fork, so the set of parameters can
// change without shifting anyone else's initialization.
ParamStore init_params(const ModelConfig& cfg, const RngStream& root);

// [h,w] image -> [n_patches, patch*patch] rows, grid row-major, pixels
// row-major within a patch.
Tensor patchify(const Tensor& image, std::size_t patch);
Tensor unpatchify(const Tensor& grid, std::size_t image_h, std::size_t image_w, std::size_t patch);

// Per-layer encoder outputs for the visible patch rows; layers is empty when
// nothing is visible.
struct ImageEncoding {
    std::vector<Var> layers;
    std::vector<std::size_t> visible_indices;
    std::size_t n_visible = 0;
};
ImageEncoding encode_image(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                           const MaskedImage& masked);

std::vector<Var> encode_text(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                             const std::vector<int>& tokens);

// Projected sequences and pooled/fused vectors.
struct Latents {
    std::optional<Var> zv_seq;  // absent when no patch is visible
    Var zl_seq;
    Var z_v;  // mean pool, or zeros when absent
    Var z_l;  // CLS row
    Var z;    // (z_v + z_l)/2
};
Latents project_and_pool(Tape& t, const ParamStore& p, const ModelConfig& cfg,
                         const ImageEncoding& img, const std::vector<Var>& txt_layers);

// Full [n_patches, patch_dim] reconstruction.
Var decode_image(Tape& t, const ParamStore& p, const ModelConfig& cfg, const Latents& lat,
                 const std::vector<std::size_t>& visible_indices,
                 std::optional<Var> text_seq);

// [n_masked, vocab+3] logits for the given masked positions (must be
// non-empty and in range).
Var decode_text(Tape& t, const ParamStore& p, const ModelConfig& cfg, const Latents& lat,
                const std::vector<std::size_t>& masked_positions);

// Clean-input embedding (no corruption, no masking) on a throwaway tape.
struct SampleEmbedding {
    Tensor z_v;
    Tensor z_l;
    Tensor z;
};
SampleEmbedding embed_sample(const ParamStore& p, const ModelConfig& cfg, const Tensor& image,
                             const std::vector<int>& tokens);

}  // namespace rmm

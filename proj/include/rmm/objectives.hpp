#pragma once
// The four-term objective.
//
//   image:      distance between frozen-extractor features of the
//               reconstructed and clean patch grids; l1 by default, squared
//               l2 as the alternative mode
//   text:       mean NLL of the original ids at masked positions, softmax
//               support restricted to content token columns
//   domain:     mean squared distance between fused vectors of same-class
//               cross-domain pairs in the batch
//   resilience: ||z - z_v||^2 + ||z - z_l||^2, batch mean
//
// total = w_img*image + w_txt*text + w_dom*domain + w_res*resilience. The
// perceptual extractor is created once from a fixed internal seed and is
// never updated; gradients flow through it into the reconstruction.

#include <cstdint>
#include <utility>
#include <vector>

#include "rmm/graph.hpp"
#include "rmm/model.hpp"

namespace rmm {

enum class ImageLossMode { l1, l2sq };
enum class PairMode { label, jaccard };

struct LossWeights {
    double image = 1.0;
    double text = 1.0;
    double domain = 0.1;
    double resilience = 0.1;
    void validate() const;
};

// Frozen feature extractor: patch embed, one pre-norm block, mean pool.
struct PerceptualExtractor {
    ParamStore params;
    ModelConfig cfg;  // dims only; geometry mirrors the model
};
PerceptualExtractor make_perceptual_extractor(const ModelConfig& cfg);

Var perceptual_features(Tape& t, const PerceptualExtractor& phi, Var patch_grid);
Tensor perceptual_features(const PerceptualExtractor& phi, const Tensor& patch_grid);

// Feature distance under the mode: l1 -> sum |d_i|, l2sq -> sum d_i^2.
Var feature_distance(Tape& t, Var a, Var b, ImageLossMode mode);
double feature_distance(const Tensor& a, const Tensor& b, ImageLossMode mode);

Var loss_image(Tape& t, const PerceptualExtractor& phi, Var recon_grid, const Tensor& clean_features,
               ImageLossMode mode);
double loss_image(const PerceptualExtractor& phi, const Tensor& recon_grid, const Tensor& clean_grid,
                  ImageLossMode mode);

// Mean over rows of -log p(target | row), softmax over columns
// [support_begin, cols). The model path passes support_begin = 3 so reserved
// ids never enter the normalization.
Var loss_text(Tape& t, Var logits, const std::vector<int>& targets, std::size_t support_begin);
double loss_text(const Tensor& logits, const std::vector<int>& targets, std::size_t support_begin);

// Metadata the pair finder needs from each batch element.
struct PairKey {
    int class_label = 0;
    int domain = 0;
    std::vector<int> tokens;  // clean tokens; content ids feed the jaccard set
};
// Unordered cross-domain pairs (i < j): label mode pairs equal classes,
// jaccard mode pairs token sets with overlap >= tau.
std::vector<std::pair<std::size_t, std::size_t>> similar_pairs(const std::vector<PairKey>& batch,
                                                               PairMode mode, double tau);

Var loss_domain(Tape& t, const std::vector<Var>& fused,
                const std::vector<std::pair<std::size_t, std::size_t>>& pairs);
double loss_domain(const std::vector<Tensor>& fused,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// Batch mean of the two-term anchoring sum.
Var loss_resilience(Tape& t, const std::vector<Latents>& batch);
double loss_resilience(const Tensor& z, const Tensor& z_v, const Tensor& z_l);

double loss_total(double l_img, double l_txt, double l_dom, double l_res, const LossWeights& w);

}  // namespace rmm

#pragma once
// Synthetic paired image/text corpus with controllable class and domain
// structure.
//
// Every sample is a (class, domain) cell member: the class controls content
// (rectangle placement in the image, content-token lexicon in the text) and
// the domain controls nuisance (global gain/offset/noise on pixels, a pool of
// style tokens mixed into the text). Classes stay linearly separable from
// pixels under the default nuisance magnitudes; domains stay detectable.
//
// Token id layout: 0 = PAD, 1 = MASK, 2 = CLS, then `vocab` content ids.
// Class c owns the contiguous lexicon [3 + c*K, 3 + (c+1)*K); domain style
// pools follow the lexicons.

#include <cstdint>
#include <string>
#include <vector>

#include "rmm/rng.hpp"
#include "rmm/tensor.hpp"

namespace rmm {

inline constexpr int kPadId = 0;
inline constexpr int kMaskId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kFirstContentId = 3;

// Per-domain nuisance: pixels map through gain*x + offset + N(0, sigma^2),
// clamped to [0,1]; style_pool tokens get mixed into rendered text.
struct DomainNuisance {
    double gain = 1.0;
    double offset = 0.0;
    double noise_sigma = 0.0;
    std::vector<int> style_pool;
};

struct CorpusSpec {
    std::size_t n_classes = 2;
    std::size_t n_domains = 2;
    std::size_t samples_per_cell = 32;
    std::size_t image_h = 24;
    std::size_t image_w = 24;
    std::size_t patch = 4;
    std::size_t vocab = 64;            // content ids only; reserved ids excluded
    std::size_t tokens_per_class = 6;  // class lexicon size
    std::size_t style_pool_size = 4;   // per-domain style tokens
    std::size_t text_len_min = 8;      // content length, CLS excluded
    std::size_t text_len_max = 24;

    // Optional per-domain nuisance override. Empty means "use the interpolated
    // defaults"; otherwise exactly n_domains entries, applied in domain order.
    // An entry with an empty style_pool keeps that domain's default pool, so
    // pixel nuisance can be tuned without hand-picking token ids.
    std::vector<DomainNuisance> nuisance;

    // Throws ConfigError naming the violated constraint.
    void validate() const;

    std::size_t n_patches() const { return (image_h / patch) * (image_w / patch); }
    std::size_t patch_dim() const { return patch * patch; }
    std::size_t token_table_size() const { return vocab + 3; }

    std::vector<std::vector<int>> class_lexicons() const;
    std::vector<DomainNuisance> domain_nuisances() const;  // override if set, else defaults
};

struct PairedSample {
    std::string id;
    int domain = 0;
    int class_label = 0;
    std::vector<int> tokens;  // leading CLS, then content/style ids
    Tensor image;             // [h, w], values in [0,1]
};

// Rectangle-on-background renderer. Draw order: placement jitter (two bounded
// ints), then one gaussian per pixel in row-major order; the noise draws are
// consumed even at sigma 0 so the draw count is placement-independent.
Tensor render_image(const CorpusSpec& spec, std::size_t class_label, std::size_t domain,
                    const DomainNuisance& nuisance, RngStream& rng);

// Token renderer. Draw order: length, style position pick, one token draw per
// position. At least 3 tokens come from the class lexicon.
std::vector<int> render_text(const CorpusSpec& spec, std::size_t class_label, std::size_t domain,
                             RngStream& rng);

// Full corpus, cell by cell. Sample streams are keyed by sample id, so a
// sample's bytes depend only on (seed, id), not on the other cell sizes in
// the CorpusSpec.
std::vector<PairedSample> generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

// JSONL, one object per line: {"id","domain","class","tokens","image":{"h","w","pixels"}}.
void write_corpus_jsonl(const std::string& path, const std::vector<PairedSample>& samples);
std::vector<PairedSample> read_corpus_jsonl(const std::string& path);

}  // namespace rmm

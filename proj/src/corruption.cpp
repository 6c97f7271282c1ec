#include "rmm/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "rmm/common.hpp"

namespace rmm {

namespace {

double clamp01(double x) {
    return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

}  // namespace

void CorruptionSpec::validate() const {
    if (!(severity >= 0.0 && severity <= 1.0)) {
        throw ConfigError("corruption: severity must lie in [0,1], got " + format_double(severity));
    }
    if (vocab == 0) throw ConfigError("corruption: vocab must be >= 1");
    for (const auto& lex : lexicons) {
        if (lex.empty()) throw ConfigError("corruption: empty class lexicon");
    }
}

void MaskBounds::validate() const {
    auto check = [](double lo, double hi, const char* side) {
        if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) {
            throw ConfigError(std::string("mask bounds: need 0 <= lo <= hi <= 1 for ") + side);
        }
    };
    check(image_lo, image_hi, "image");
    check(text_lo, text_hi, "text");
}

Tensor perturb_image(const Tensor& image, const CorruptionSpec& spec, RngStream& rng) {
    if (image.rank() != 2) {
        throw ConfigError("perturb_image: expected rank-2 image, got " + shape_str(image.shape));
    }
    spec.validate();
    Tensor out = image;
    double s = spec.severity;
    if (s == 0.0) return out;  // exact identity, no draws

    std::size_t H = out.shape[0], W = out.shape[1];
    if (spec.op_intensity) {
        double gain = rng.uniform_real(1.0 - 0.5 * s, 1.0 + 0.5 * s);
        for (double& px : out.values) px = clamp01(px * gain);
    }
    if (spec.op_contrast) {
        double power = rng.uniform_real(1.0 - 0.5 * s, 1.0 + 0.5 * s);
        for (double& px : out.values) px = clamp01(std::pow(px, power));
    }
    if (spec.op_noise) {
        double sigma = 0.25 * s;
        for (double& px : out.values) px = clamp01(px + sigma * rng.gaussian());
    }
    if (spec.op_region) {
        double side_frac = std::sqrt(0.3 * s);
        std::size_t rh = static_cast<std::size_t>(round_half_away(side_frac * static_cast<double>(H)));
        std::size_t rw = static_cast<std::size_t>(round_half_away(side_frac * static_cast<double>(W)));
        rh = std::min(rh, H);
        rw = std::min(rw, W);
        if (rh > 0 && rw > 0) {
            std::size_t top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(H - rh)));
            std::size_t left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(W - rw)));
            for (std::size_t r = top; r < top + rh; ++r)
                for (std::size_t c = left; c < left + rw; ++c) out.values[r * W + c] = 0.0;
        }
    }
    return out;
}

std::vector<int> perturb_text(const std::vector<int>& tokens, const CorruptionSpec& spec,
                              RngStream& rng) {
    if (tokens.empty() || tokens[0] != kClsId) {
        throw ConfigError("perturb_text: token sequence must start with CLS");
    }
    spec.validate();
    double s = spec.severity;
    if (s == 0.0) return tokens;  // exact identity, no draws

    std::vector<int> tail(tokens.begin() + 1, tokens.end());

    if (spec.op_dropout && !tail.empty()) {
        // "Sentence" dropout on punctuation-free synthetic text: with
        // probability p, remove one contiguous run of ceil(len/3) tokens,
        // capped so at least one content token survives.
        double p = 0.5 * s;
        if (rng.bernoulli(p)) {
            std::size_t chunk = (tail.size() + 2) / 3;
            chunk = std::min(chunk, tail.size() - 1);
            if (chunk > 0) {
                std::size_t start = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(tail.size() - chunk)));
                tail.erase(tail.begin() + static_cast<std::ptrdiff_t>(start),
                           tail.begin() + static_cast<std::ptrdiff_t>(start + chunk));
            }
        }
    }
    if (spec.op_synonym) {
        double q = 0.3 * s;
        for (int& tok : tail) {
            if (!rng.bernoulli(q)) continue;
            const std::vector<int>* lex = nullptr;
            for (const auto& l : spec.lexicons) {
                if (std::find(l.begin(), l.end(), tok) != l.end()) {
                    lex = &l;
                    break;
                }
            }
            if (lex != nullptr) {
                if (lex->size() < 2) continue;  // single-token lexicon: no alternative
                std::size_t pick = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(lex->size()) - 2));
                // skip the original so the replacement always differs
                std::size_t j = 0;
                for (int cand : *lex) {
                    if (cand == tok) continue;
                    if (j == pick) {
                        tok = cand;
                        break;
                    }
                    ++j;
                }
            } else {
                tok = kFirstContentId + static_cast<int>(rng.uniform_int(
                                            0, static_cast<std::int64_t>(spec.vocab) - 1));
            }
        }
    }
    if (spec.op_truncate) {
        double f = 1.0 - 0.5 * s;
        std::size_t keep = static_cast<std::size_t>(std::max<long long>(
            1, round_half_away(f * static_cast<double>(tail.size()))));
        if (keep < tail.size()) tail.resize(keep);
    }

    std::vector<int> out;
    out.reserve(tail.size() + 1);
    out.push_back(kClsId);
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

MaskPlan sample_mask_plan(RngStream& rng, std::size_t n_patches, std::size_t n_tokens,
                          const MaskBounds& bounds) {
    bounds.validate();
    if (n_patches == 0) throw ConfigError("sample_mask_plan: n_patches must be >= 1");
    if (n_tokens < 1) throw ConfigError("sample_mask_plan: n_tokens must be >= 1 (CLS)");
    MaskPlan plan;
    plan.r_v = rng.uniform_real(bounds.image_lo, bounds.image_hi);
    plan.r_l = rng.uniform_real(bounds.text_lo, bounds.text_hi);
    std::size_t count_v = static_cast<std::size_t>(
        round_half_away(plan.r_v * static_cast<double>(n_patches)));
    count_v = std::min(count_v, n_patches);
    std::size_t n_maskable = n_tokens - 1;  // CLS never masked
    std::size_t count_l = static_cast<std::size_t>(
        round_half_away(plan.r_l * static_cast<double>(n_maskable)));
    count_l = std::min(count_l, n_maskable);
    plan.image_patches = rng.pick_k_of_n(count_v, n_patches);
    plan.text_positions = rng.pick_k_of_n(count_l, n_maskable);
    for (std::size_t& p : plan.text_positions) p += 1;  // shift past CLS
    return plan;
}

MaskedImage apply_image_mask(const Tensor& patch_grid, const MaskPlan& plan) {
    if (patch_grid.rank() != 2) {
        throw ConfigError("apply_image_mask: expected rank-2 patch grid");
    }
    std::size_t n = patch_grid.rows(), d = patch_grid.cols();
    std::vector<bool> masked(n, false);
    for (std::size_t p : plan.image_patches) {
        if (p >= n) {
            throw ConfigError("apply_image_mask: patch index " + std::to_string(p) +
                              " out of range for " + std::to_string(n) + " patches");
        }
        if (masked[p]) throw ConfigError("apply_image_mask: duplicate patch index " + std::to_string(p));
        masked[p] = true;
    }
    MaskedImage out;
    out.total_patches = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!masked[i]) out.visible_indices.push_back(i);
    }
    if (!out.visible_indices.empty()) {
        Tensor vis = Tensor::zeros({out.visible_indices.size(), d});
        for (std::size_t r = 0; r < out.visible_indices.size(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                vis.values[r * d + c] = patch_grid.values[out.visible_indices[r] * d + c];
        out.visible = std::move(vis);
    }
    return out;
}

MaskedText apply_text_mask(const std::vector<int>& tokens, const MaskPlan& plan) {
    if (tokens.empty() || tokens[0] != kClsId) {
        throw ConfigError("apply_text_mask: token sequence must start with CLS");
    }
    MaskedText out;
    out.tokens = tokens;
    std::size_t prev = 0;
    for (std::size_t p : plan.text_positions) {
        if (p == 0) throw ConfigError("apply_text_mask: position 0 (CLS) cannot be masked");
        if (p >= tokens.size()) {
            throw ConfigError("apply_text_mask: position " + std::to_string(p) +
                              " out of range for length " + std::to_string(tokens.size()));
        }
        if (!out.targets.empty() && p <= prev) {
            throw ConfigError("apply_text_mask: positions must be strictly increasing");
        }
        prev = p;
        out.targets.push_back(tokens[p]);
        out.tokens[p] = kMaskId;
    }
    return out;
}

}  // namespace rmm

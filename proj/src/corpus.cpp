#include "rmm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "rmm/common.hpp"

namespace rmm {

namespace {

constexpr double kBackground = 0.20;
constexpr double kRectFill = 0.70;
constexpr double kStyleFraction = 0.30;
constexpr int kJitter = 2;

double clamp01(double x) {
    return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

}  // namespace

void CorpusSpec::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("corpus: ") + name + " must be >= 1");
    };
    positive(n_classes, "n_classes");
    positive(n_domains, "n_domains");
    positive(samples_per_cell, "samples_per_cell");
    positive(image_h, "image_h");
    positive(image_w, "image_w");
    positive(patch, "patch");
    positive(vocab, "vocab");
    positive(tokens_per_class, "tokens_per_class");
    if (image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("corpus: patch " + std::to_string(patch) + " must divide image " +
                          std::to_string(image_h) + "x" + std::to_string(image_w));
    }
    if (text_len_min < 3) {
        throw ConfigError("corpus: text_len_min must be >= 3 (each sample carries >= 3 lexicon tokens)");
    }
    if (text_len_min > text_len_max) {
        throw ConfigError("corpus: text_len_min exceeds text_len_max");
    }
    std::size_t needed = n_classes * tokens_per_class + n_domains * style_pool_size;
    if (needed > vocab) {
        throw ConfigError("corpus: vocab " + std::to_string(vocab) + " too small for " +
                          std::to_string(n_classes) + " lexicons of " + std::to_string(tokens_per_class) +
                          " plus " + std::to_string(n_domains) + " style pools of " +
                          std::to_string(style_pool_size) + " (needs " + std::to_string(needed) + ")");
    }
    if (!nuisance.empty()) {
        if (nuisance.size() != n_domains) {
            throw ConfigError("corpus: domain_nuisance has " + std::to_string(nuisance.size()) +
                              " entries, expected " + std::to_string(n_domains));
        }
        int content_end = kFirstContentId + static_cast<int>(vocab);
        for (std::size_t d = 0; d < nuisance.size(); ++d) {
            const DomainNuisance& nu = nuisance[d];
            std::string at = "corpus: domain_nuisance[" + std::to_string(d) + "]";
            if (!std::isfinite(nu.gain) || !std::isfinite(nu.offset) || !std::isfinite(nu.noise_sigma)) {
                throw ConfigError(at + ": gain/offset/noise_sigma must be finite");
            }
            if (nu.noise_sigma < 0.0) throw ConfigError(at + ": noise_sigma must be >= 0");
            // Style tokens must stay outside every class lexicon so domain
            // nuisance never leaks class content.
            int lexicon_end = kFirstContentId + static_cast<int>(n_classes * tokens_per_class);
            for (int id : nu.style_pool) {
                if (id < kFirstContentId || id >= content_end) {
                    throw ConfigError(at + ": style token " + std::to_string(id) +
                                      " outside the content id range");
                }
                if (id < lexicon_end) {
                    throw ConfigError(at + ": style token " + std::to_string(id) +
                                      " collides with a class lexicon");
                }
            }
        }
    }
}

std::vector<std::vector<int>> CorpusSpec::class_lexicons() const {
    std::vector<std::vector<int>> lex(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t k = 0; k < tokens_per_class; ++k) {
            lex[c].push_back(kFirstContentId + static_cast<int>(c * tokens_per_class + k));
        }
    }
    return lex;
}

std::vector<DomainNuisance> CorpusSpec::domain_nuisances() const {
    std::vector<DomainNuisance> out(n_domains);
    int style_base = kFirstContentId + static_cast<int>(n_classes * tokens_per_class);
    for (std::size_t d = 0; d < n_domains; ++d) {
        double t = n_domains == 1 ? 0.0 : static_cast<double>(d) / static_cast<double>(n_domains - 1);
        DomainNuisance& nu = out[d];
        nu.gain = 1.0 + t * (0.85 - 1.0);
        nu.offset = t * 0.18;
        nu.noise_sigma = 0.02 + t * (0.06 - 0.02);
        for (std::size_t s = 0; s < style_pool_size; ++s) {
            nu.style_pool.push_back(style_base + static_cast<int>(d * style_pool_size + s));
        }
    }
    if (!nuisance.empty()) {
        for (std::size_t d = 0; d < n_domains && d < nuisance.size(); ++d) {
            const DomainNuisance& over = nuisance[d];
            out[d].gain = over.gain;
            out[d].offset = over.offset;
            out[d].noise_sigma = over.noise_sigma;
            if (!over.style_pool.empty()) out[d].style_pool = over.style_pool;
        }
    }
    return out;
}

Tensor render_image(const CorpusSpec& spec, std::size_t class_label, std::size_t domain,
                    const DomainNuisance& nuisance, RngStream& rng) {
    if (class_label >= spec.n_classes || domain >= spec.n_domains) {
        throw ConfigError("render_image: class/domain out of range");
    }
    std::size_t H = spec.image_h, W = spec.image_w;
    std::size_t side = std::max<std::size_t>(2, H / 3 + 2 * (class_label % 2));
    side = std::min(side, std::min(H, W));

    // Class anchor: quadrant by class mod 4, nudged 2px toward center per wrap.
    std::size_t wrap = class_label / 4;
    std::size_t m = std::min<std::size_t>(2 + 2 * wrap, (std::min(H, W) - side) / 2);
    std::size_t a = class_label % 4;
    std::size_t top = (a == 0 || a == 1) ? m : H - m - side;
    std::size_t left = (a == 0 || a == 2) ? m : W - m - side;

    long long dy = rng.uniform_int(-kJitter, kJitter);
    long long dx = rng.uniform_int(-kJitter, kJitter);
    long long t2 = std::clamp<long long>(static_cast<long long>(top) + dy, 0,
                                         static_cast<long long>(H - side));
    long long l2 = std::clamp<long long>(static_cast<long long>(left) + dx, 0,
                                         static_cast<long long>(W - side));

    Tensor img = Tensor::full({H, W}, kBackground);
    for (std::size_t r = static_cast<std::size_t>(t2); r < static_cast<std::size_t>(t2) + side; ++r) {
        for (std::size_t c = static_cast<std::size_t>(l2); c < static_cast<std::size_t>(l2) + side; ++c) {
            img.values[r * W + c] = kRectFill;
        }
    }
    for (double& px : img.values) {
        px = clamp01(nuisance.gain * px + nuisance.offset + nuisance.noise_sigma * rng.gaussian());
    }
    return img;
}

std::vector<int> render_text(const CorpusSpec& spec, std::size_t class_label, std::size_t domain,
                             RngStream& rng) {
    if (class_label >= spec.n_classes || domain >= spec.n_domains) {
        throw ConfigError("render_text: class/domain out of range");
    }
    auto lexicons = spec.class_lexicons();
    auto nuisances = spec.domain_nuisances();
    const std::vector<int>& lex = lexicons[class_label];
    const std::vector<int>& pool = nuisances[domain].style_pool;

    std::size_t len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.text_len_min),
                        static_cast<std::int64_t>(spec.text_len_max)));
    std::size_t n_style = 0;
    if (!pool.empty()) {
        n_style = std::min<std::size_t>(len - 3,
                                        static_cast<std::size_t>(round_half_away(kStyleFraction * static_cast<double>(len))));
    }
    std::vector<std::size_t> style_pos = rng.pick_k_of_n(n_style, len);

    std::vector<int> tokens;
    tokens.reserve(len + 1);
    tokens.push_back(kClsId);
    std::size_t sp = 0;
    for (std::size_t i = 0; i < len; ++i) {
        bool is_style = sp < style_pos.size() && style_pos[sp] == i;
        if (is_style) {
            ++sp;
            tokens.push_back(pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
        } else {
            tokens.push_back(lex[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(lex.size()) - 1))]);
        }
    }
    return tokens;
}

std::vector<PairedSample> generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto nuisances = spec.domain_nuisances();
    RngStream root(seed, "corpus");
    std::vector<PairedSample> out;
    out.reserve(spec.n_classes * spec.n_domains * spec.samples_per_cell);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t d = 0; d < spec.n_domains; ++d) {
            for (std::size_t i = 0; i < spec.samples_per_cell; ++i) {
                PairedSample s;
                s.id = "c" + std::to_string(c) + "_d" + std::to_string(d) + "_" + std::to_string(i);
                s.class_label = static_cast<int>(c);
                s.domain = static_cast<int>(d);
                RngStream ss = root.fork(s.id);
                RngStream img_rng = ss.fork("img");
                RngStream txt_rng = ss.fork("txt");
                s.image = render_image(spec, c, d, nuisances[d], img_rng);
                s.tokens = render_text(spec, c, d, txt_rng);
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

void write_corpus_jsonl(const std::string& path, const std::vector<PairedSample>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    for (const PairedSample& s : samples) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["domain"] = s.domain;
        j["class"] = s.class_label;
        j["tokens"] = s.tokens;
        j["image"]["h"] = s.image.shape[0];
        j["image"]["w"] = s.image.shape[1];
        j["image"]["pixels"] = s.image.values;
        f << j.dump() << "\n";
    }
    if (!f) throw DataError("write to '" + path + "' failed");
}

std::vector<PairedSample> read_corpus_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open corpus file '" + path + "'");
    std::vector<PairedSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + " line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
        }
        try {
            PairedSample s;
            s.id = j.at("id").get<std::string>();
            s.domain = j.at("domain").get<int>();
            s.class_label = j.at("class").get<int>();
            s.tokens = j.at("tokens").get<std::vector<int>>();
            const auto& im = j.at("image");
            std::size_t h = im.at("h").get<std::size_t>();
            std::size_t w = im.at("w").get<std::size_t>();
            std::vector<double> px = im.at("pixels").get<std::vector<double>>();
            if (h == 0 || w == 0 || px.size() != h * w) {
                throw DataError(path + " line " + std::to_string(line_no) + ": image dims " +
                                std::to_string(h) + "x" + std::to_string(w) + " do not match " +
                                std::to_string(px.size()) + " pixels");
            }
            if (s.domain < 0 || s.class_label < 0) {
                throw DataError(path + " line " + std::to_string(line_no) + ": negative domain or class");
            }
            if (s.tokens.empty()) {
                throw DataError(path + " line " + std::to_string(line_no) + ": empty token list");
            }
            s.image = Tensor({h, w}, std::move(px));
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + " line " + std::to_string(line_no) + ": bad record (" + e.what() + ")");
        }
    }
    return out;
}

}  // namespace rmm

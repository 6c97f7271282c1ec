#include "rmm/config_json.hpp"

#include <set>

namespace rmm {

namespace {

// Accepts 16 whether the writer typed it (parsed unsigned) or a tool emitted
// it as a signed integer value.
bool is_nonneg_int(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Tracks which keys were consumed so unknown ones can be reported by name.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be a JSON object");
    }

    std::size_t get_size(const char* key, std::size_t def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!is_nonneg_int(v)) {
            throw ConfigError("'" + path_ + "." + key + "' must be a non-negative integer");
        }
        return v.get<std::size_t>();
    }

    std::uint64_t get_u64(const char* key, std::uint64_t def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!is_nonneg_int(v)) {
            throw ConfigError("'" + path_ + "." + key + "' must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    double get_double(const char* key, double def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError("'" + path_ + "." + key + "' must be a number");
        return v.get<double>();
    }

    bool get_bool(const char* key, bool def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError("'" + path_ + "." + key + "' must be a boolean");
        return v.get<bool>();
    }

    std::string get_string(const char* key, std::string def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError("'" + path_ + "." + key + "' must be a string");
        return v.get<std::string>();
    }

    std::vector<double> get_double_list(const char* key, std::vector<double> def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError("'" + path_ + "." + key + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) {
                throw ConfigError("'" + path_ + "." + key + "' must be an array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<std::size_t> get_size_list(const char* key, std::vector<std::size_t> def) {
        if (!mark(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError("'" + path_ + "." + key + "' must be an array of non-negative integers");
        }
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!is_nonneg_int(e)) {
                throw ConfigError("'" + path_ + "." + key + "' must be an array of non-negative integers");
            }
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    // Pair [lo, hi] of numbers.
    bool get_range(const char* key, double& lo, double& hi) {
        if (!mark(key)) return false;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ConfigError("'" + path_ + "." + key + "' must be a [lo, hi] number pair");
        }
        lo = v[0].get<double>();
        hi = v[1].get<double>();
        return true;
    }

    const nlohmann::json* sub(const char* key) {
        if (!mark(key)) return nullptr;
        return &j_.at(key);
    }

    void done() {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown key '" + path_ + "." + key + "'");
            }
        }
    }

private:
    bool mark(const char* key) {
        if (!j_.contains(key)) return false;
        seen_.insert(key);
        return true;
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

// ---- corpus ----

nlohmann::ordered_json corpus_to_json(const CorpusSpec& c) {
    nlohmann::ordered_json j;
    j["n_classes"] = c.n_classes;
    j["n_domains"] = c.n_domains;
    j["samples_per_cell"] = c.samples_per_cell;
    j["image_h"] = c.image_h;
    j["image_w"] = c.image_w;
    j["patch"] = c.patch;
    j["vocab"] = c.vocab;
    j["tokens_per_class"] = c.tokens_per_class;
    j["style_pool_size"] = c.style_pool_size;
    j["text_len_min"] = c.text_len_min;
    j["text_len_max"] = c.text_len_max;
    if (!c.nuisance.empty()) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const DomainNuisance& nu : c.nuisance) {
            nlohmann::ordered_json e;
            e["gain"] = nu.gain;
            e["offset"] = nu.offset;
            e["noise_sigma"] = nu.noise_sigma;
            e["style_pool"] = nu.style_pool;  // empty array = keep the default pool
            arr.push_back(std::move(e));
        }
        j["domain_nuisance"] = std::move(arr);
    }
    return j;
}

void corpus_from_json(const nlohmann::json& j, const std::string& path, CorpusSpec& out) {
    StrictObject o(j, path);
    out.n_classes = o.get_size("n_classes", out.n_classes);
    out.n_domains = o.get_size("n_domains", out.n_domains);
    out.samples_per_cell = o.get_size("samples_per_cell", out.samples_per_cell);
    out.image_h = o.get_size("image_h", out.image_h);
    out.image_w = o.get_size("image_w", out.image_w);
    out.patch = o.get_size("patch", out.patch);
    out.vocab = o.get_size("vocab", out.vocab);
    out.tokens_per_class = o.get_size("tokens_per_class", out.tokens_per_class);
    out.style_pool_size = o.get_size("style_pool_size", out.style_pool_size);
    out.text_len_min = o.get_size("text_len_min", out.text_len_min);
    out.text_len_max = o.get_size("text_len_max", out.text_len_max);
    if (const nlohmann::json* arr = o.sub("domain_nuisance")) {
        if (!arr->is_array()) {
            throw ConfigError("'" + path + ".domain_nuisance' must be an array of objects");
        }
        out.nuisance.clear();
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string at = path + ".domain_nuisance[" + std::to_string(i) + "]";
            StrictObject eo((*arr)[i], at);
            DomainNuisance nu;
            nu.gain = eo.get_double("gain", nu.gain);
            nu.offset = eo.get_double("offset", nu.offset);
            nu.noise_sigma = eo.get_double("noise_sigma", nu.noise_sigma);
            for (std::size_t id : eo.get_size_list("style_pool", {})) {
                nu.style_pool.push_back(static_cast<int>(id));
            }
            eo.done();
            out.nuisance.push_back(std::move(nu));
        }
    }
    o.done();
}

// ---- model ----

nlohmann::ordered_json model_to_json(const ModelConfig& m, bool geometry_keys) {
    nlohmann::ordered_json j;
    j["embed_dim"] = m.embed_dim;
    j["n_heads"] = m.n_heads;
    j["n_layers_v"] = m.n_layers_v;
    j["n_layers_l"] = m.n_layers_l;
    j["expose_layer_v"] = m.expose_layer_v;
    j["n_dec_layers"] = m.n_dec_layers;
    j["ln_eps"] = m.ln_eps;
    if (geometry_keys) {
        j["image_h"] = m.image_h;
        j["image_w"] = m.image_w;
        j["patch"] = m.patch;
        j["vocab"] = m.vocab;
        j["max_text_len"] = m.max_text_len;
    }
    return j;
}

void model_from_json(const nlohmann::json& j, const std::string& path, ModelConfig& out,
                     bool geometry_keys) {
    StrictObject o(j, path);
    out.embed_dim = o.get_size("embed_dim", out.embed_dim);
    out.n_heads = o.get_size("n_heads", out.n_heads);
    out.n_layers_v = o.get_size("n_layers_v", out.n_layers_v);
    out.n_layers_l = o.get_size("n_layers_l", out.n_layers_l);
    out.expose_layer_v = o.get_size("expose_layer_v", out.expose_layer_v);
    out.n_dec_layers = o.get_size("n_dec_layers", out.n_dec_layers);
    out.ln_eps = o.get_double("ln_eps", out.ln_eps);
    if (geometry_keys) {
        out.image_h = o.get_size("image_h", out.image_h);
        out.image_w = o.get_size("image_w", out.image_w);
        out.patch = o.get_size("patch", out.patch);
        out.vocab = o.get_size("vocab", out.vocab);
        out.max_text_len = o.get_size("max_text_len", out.max_text_len);
    }
    o.done();
}

// ---- corruption ----

nlohmann::ordered_json corruption_to_json(const CorruptionSpec& c) {
    nlohmann::ordered_json j;
    j["severity"] = c.severity;
    j["intensity"] = c.op_intensity;
    j["contrast"] = c.op_contrast;
    j["noise"] = c.op_noise;
    j["region_removal"] = c.op_region;
    j["dropout"] = c.op_dropout;
    j["synonym_replace"] = c.op_synonym;
    j["truncate"] = c.op_truncate;
    return j;
}

void corruption_from_json(const nlohmann::json& j, const std::string& path, CorruptionSpec& out) {
    StrictObject o(j, path);
    out.severity = o.get_double("severity", out.severity);
    out.op_intensity = o.get_bool("intensity", out.op_intensity);
    out.op_contrast = o.get_bool("contrast", out.op_contrast);
    out.op_noise = o.get_bool("noise", out.op_noise);
    out.op_region = o.get_bool("region_removal", out.op_region);
    out.op_dropout = o.get_bool("dropout", out.op_dropout);
    out.op_synonym = o.get_bool("synonym_replace", out.op_synonym);
    out.op_truncate = o.get_bool("truncate", out.op_truncate);
    o.done();
}

// ---- train ----

namespace {

std::string pair_mode_name(PairMode m) {
    return m == PairMode::label ? "label" : "jaccard";
}

PairMode pair_mode_parse(const std::string& s, const std::string& where) {
    if (s == "label") return PairMode::label;
    if (s == "jaccard") return PairMode::jaccard;
    throw ConfigError("'" + where + "' must be \"label\" or \"jaccard\", got \"" + s + "\"");
}

std::string image_loss_name(ImageLossMode m) {
    return m == ImageLossMode::l1 ? "l1" : "l2sq";
}

ImageLossMode image_loss_parse(const std::string& s, const std::string& where) {
    if (s == "l1") return ImageLossMode::l1;
    if (s == "l2sq") return ImageLossMode::l2sq;
    throw ConfigError("'" + where + "' must be \"l1\" or \"l2sq\", got \"" + s + "\"");
}

}  // namespace

nlohmann::ordered_json train_to_json(const TrainConfig& t, const MaskBounds& b) {
    nlohmann::ordered_json j;
    j["total_steps"] = t.total_steps;
    j["batch_size"] = t.batch_size;
    j["lr_encoder"] = t.lr_encoder;
    j["lr_head"] = t.lr_head;
    j["warmup_ratio"] = t.warmup_ratio;
    j["weight_decay"] = t.weight_decay;
    j["beta1"] = t.beta1;
    j["beta2"] = t.beta2;
    j["adam_eps"] = t.adam_eps;
    j["loss_weights"] = {{"image", t.weights.image},
                         {"text", t.weights.text},
                         {"domain", t.weights.domain},
                         {"resilience", t.weights.resilience}};
    j["mask_ratio_bounds"] = {{"image", {b.image_lo, b.image_hi}}, {"text", {b.text_lo, b.text_hi}}};
    j["robust_masking"] = t.robust_masking;
    j["domain_consistency"] = t.domain_consistency;
    j["modality_resilience"] = t.modality_resilience;
    j["pair_mode"] = pair_mode_name(t.pair_mode);
    j["jaccard_tau"] = t.jaccard_tau;
    j["image_loss"] = image_loss_name(t.image_loss);
    return j;
}

void train_from_json(const nlohmann::json& j, const std::string& path, TrainConfig& out,
                     MaskBounds& bounds) {
    StrictObject o(j, path);
    out.total_steps = o.get_size("total_steps", out.total_steps);
    out.batch_size = o.get_size("batch_size", out.batch_size);
    out.lr_encoder = o.get_double("lr_encoder", out.lr_encoder);
    out.lr_head = o.get_double("lr_head", out.lr_head);
    out.warmup_ratio = o.get_double("warmup_ratio", out.warmup_ratio);
    out.weight_decay = o.get_double("weight_decay", out.weight_decay);
    out.beta1 = o.get_double("beta1", out.beta1);
    out.beta2 = o.get_double("beta2", out.beta2);
    out.adam_eps = o.get_double("adam_eps", out.adam_eps);
    if (const nlohmann::json* w = o.sub("loss_weights")) {
        StrictObject wo(*w, path + ".loss_weights");
        out.weights.image = wo.get_double("image", out.weights.image);
        out.weights.text = wo.get_double("text", out.weights.text);
        out.weights.domain = wo.get_double("domain", out.weights.domain);
        out.weights.resilience = wo.get_double("resilience", out.weights.resilience);
        wo.done();
    }
    if (const nlohmann::json* mb = o.sub("mask_ratio_bounds")) {
        StrictObject bo(*mb, path + ".mask_ratio_bounds");
        bo.get_range("image", bounds.image_lo, bounds.image_hi);
        bo.get_range("text", bounds.text_lo, bounds.text_hi);
        bo.done();
    }
    out.robust_masking = o.get_bool("robust_masking", out.robust_masking);
    out.domain_consistency = o.get_bool("domain_consistency", out.domain_consistency);
    out.modality_resilience = o.get_bool("modality_resilience", out.modality_resilience);
    out.pair_mode = pair_mode_parse(o.get_string("pair_mode", pair_mode_name(out.pair_mode)),
                                    path + ".pair_mode");
    out.jaccard_tau = o.get_double("jaccard_tau", out.jaccard_tau);
    out.image_loss = image_loss_parse(o.get_string("image_loss", image_loss_name(out.image_loss)),
                                      path + ".image_loss");
    o.done();
}

// ---- eval ----

nlohmann::ordered_json eval_to_json(const EvalConfig& e) {
    nlohmann::ordered_json j;
    j["probe_train_fraction"] = e.probe_train_fraction;
    j["probe_iters"] = e.probe_iters;
    j["probe_lr"] = e.probe_lr;
    j["probe_l2"] = e.probe_l2;
    j["sweep_severities"] = e.sweep_severities;
    j["retrieval_ks"] = e.retrieval_ks;
    j["retrieval_severity"] = e.retrieval_severity;
    return j;
}

void eval_from_json(const nlohmann::json& j, const std::string& path, EvalConfig& out) {
    StrictObject o(j, path);
    out.probe_train_fraction = o.get_double("probe_train_fraction", out.probe_train_fraction);
    out.probe_iters = o.get_size("probe_iters", out.probe_iters);
    out.probe_lr = o.get_double("probe_lr", out.probe_lr);
    out.probe_l2 = o.get_double("probe_l2", out.probe_l2);
    out.sweep_severities = o.get_double_list("sweep_severities", out.sweep_severities);
    out.retrieval_ks = o.get_size_list("retrieval_ks", out.retrieval_ks);
    out.retrieval_severity = o.get_double("retrieval_severity", out.retrieval_severity);
    o.done();
}

}  // namespace rmm

#include "rmm/run_config.hpp"

#include <fstream>
#include <set>

#include "rmm/config_json.hpp"

namespace rmm {

void RunConfig::finalize() {
    corpus.validate();
    model.image_h = corpus.image_h;
    model.image_w = corpus.image_w;
    model.patch = corpus.patch;
    model.vocab = corpus.vocab;
    model.max_text_len = corpus.text_len_max + 1;  // CLS + longest content run
    model.validate();
    corruption_for().validate();
    bounds.validate();
    train.validate();
    eval.validate();
    if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
}

CorruptionSpec RunConfig::corruption_for() const {
    CorruptionSpec c = corruption;
    c.lexicons = corpus.class_lexicons();
    c.vocab = corpus.vocab;
    return c;
}

RunConfig default_run_config() {
    RunConfig rc;
    rc.finalize();
    return rc;
}

nlohmann::ordered_json run_config_to_json(const RunConfig& rc) {
    nlohmann::ordered_json j;
    j["seed"] = rc.seed;
    j["output_dir"] = rc.output_dir;
    j["corpus"] = corpus_to_json(rc.corpus);
    j["model"] = model_to_json(rc.model, /*geometry_keys=*/false);
    j["corruption"] = corruption_to_json(rc.corruption);
    j["train"] = train_to_json(rc.train, rc.bounds);
    j["eval"] = eval_to_json(rc.eval);
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    static const std::set<std::string> known = {"seed",       "output_dir", "corpus",
                                               "model",      "corruption", "train",
                                               "eval"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "'");
    }
    RunConfig rc;
    if (j.contains("seed")) {
        const auto& sv = j.at("seed");
        bool ok = sv.is_number_unsigned() ||
                  (sv.is_number_integer() && sv.get<std::int64_t>() >= 0);
        if (!ok) {
            throw ConfigError("'seed' must be a non-negative integer");
        }
        rc.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw ConfigError("'output_dir' must be a string");
        rc.output_dir = j.at("output_dir").get<std::string>();
    }
    if (j.contains("corpus")) corpus_from_json(j.at("corpus"), "corpus", rc.corpus);
    if (j.contains("model")) {
        model_from_json(j.at("model"), "model", rc.model, /*geometry_keys=*/false);
    }
    if (j.contains("corruption")) corruption_from_json(j.at("corruption"), "corruption", rc.corruption);
    if (j.contains("train")) train_from_json(j.at("train"), "train", rc.train, rc.bounds);
    if (j.contains("eval")) eval_from_json(j.at("eval"), "eval", rc.eval);
    rc.finalize();
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace rmm

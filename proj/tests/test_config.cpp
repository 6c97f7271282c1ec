// Run-config JSON contract: default round trip, strict unknown-key
// rejection, geometry derivation, and error classification.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rmm/run_config.hpp"

using namespace rmm;
using nlohmann::json;

namespace {

std::string write_temp(const char* leaf, const std::string& body) {
    std::string path = (std::filesystem::temp_directory_path() / leaf).string();
    std::ofstream f(path, std::ios::binary);
    f << body;
    return path;
}

}  // namespace

TEST_CASE("default config round-trips through JSON unchanged") {
    RunConfig def = default_run_config();
    auto j = run_config_to_json(def);
    RunConfig back = run_config_from_json(json::parse(j.dump()));
    CHECK(run_config_to_json(back).dump() == j.dump());
    CHECK(back.seed == def.seed);
    CHECK(back.model.embed_dim == def.model.embed_dim);
    CHECK(back.train.total_steps == def.train.total_steps);
    CHECK(back.eval.sweep_severities == def.eval.sweep_severities);
}

TEST_CASE("model geometry always derives from the corpus section") {
    RunConfig rc = default_run_config();
    json j = json::parse(run_config_to_json(rc).dump());
    j["corpus"]["image_h"] = 16;
    j["corpus"]["image_w"] = 16;
    j["corpus"]["text_len_max"] = 12;
    RunConfig back = run_config_from_json(j);
    CHECK(back.model.image_h == 16);
    CHECK(back.model.n_patches() == 16);
    CHECK(back.model.max_text_len == 13);  // CLS + longest content run
}

TEST_CASE("unknown keys are rejected by name at any depth") {
    RunConfig rc = default_run_config();
    json j = json::parse(run_config_to_json(rc).dump());
    j["speling_mistake"] = 1;
    CHECK_THROWS_WITH_AS(run_config_from_json(j), doctest::Contains("speling_mistake"),
                         ConfigError);

    json j2 = json::parse(run_config_to_json(rc).dump());
    j2["train"]["lr_encodr"] = 0.1;
    CHECK_THROWS_WITH_AS(run_config_from_json(j2), doctest::Contains("lr_encodr"), ConfigError);

    json j3 = json::parse(run_config_to_json(rc).dump());
    j3["corruption"]["op_blur"] = true;
    CHECK_THROWS_WITH_AS(run_config_from_json(j3), doctest::Contains("op_blur"), ConfigError);
}

TEST_CASE("partial configs inherit defaults for omitted keys") {
    json j = json::object();
    j["seed"] = 7;
    j["train"] = json::object();
    j["train"]["total_steps"] = 42;
    RunConfig rc = run_config_from_json(j);
    CHECK(rc.seed == 7);
    CHECK(rc.train.total_steps == 42);
    RunConfig def = default_run_config();
    CHECK(rc.train.batch_size == def.train.batch_size);
    CHECK(rc.model.embed_dim == def.model.embed_dim);
}

TEST_CASE("out-of-range values fail validation with a config error") {
    RunConfig rc = default_run_config();
    json j = json::parse(run_config_to_json(rc).dump());
    j["corruption"]["severity"] = 1.5;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);

    json j2 = json::parse(run_config_to_json(rc).dump());
    j2["corpus"]["patch"] = 5;  // does not divide 24
    CHECK_THROWS_AS(run_config_from_json(j2), ConfigError);

    json j3 = json::parse(run_config_to_json(rc).dump());
    j3["train"]["warmup_ratio"] = -0.1;
    CHECK_THROWS_AS(run_config_from_json(j3), ConfigError);

    json j4 = json::parse(run_config_to_json(rc).dump());
    j4["model"]["n_heads"] = 7;  // does not divide embed_dim 32
    CHECK_THROWS_AS(run_config_from_json(j4), ConfigError);
}

TEST_CASE("load_run_config classifies file problems as config errors") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/rmm_cfg.json"), ConfigError);
    std::string bad = write_temp("rmm_cfg_bad.json", "{ not json");
    CHECK_THROWS_AS(load_run_config(bad), ConfigError);
    std::string good = write_temp("rmm_cfg_good.json", run_config_to_json(default_run_config()).dump());
    CHECK_NOTHROW(load_run_config(good));
    std::remove(bad.c_str());
    std::remove(good.c_str());
}

TEST_CASE("corruption_for carries corpus lexicons into the corruption spec") {
    RunConfig rc = default_run_config();
    CorruptionSpec corr = rc.corruption_for();
    CHECK(corr.vocab == rc.corpus.vocab);
    REQUIRE(corr.lexicons.size() == rc.corpus.n_classes);
    CHECK(corr.lexicons[0].size() == rc.corpus.tokens_per_class);
    CHECK(corr.lexicons[0][0] == kFirstContentId);
    CHECK_NOTHROW(corr.validate());
}

TEST_CASE("serialized key order is stable across dumps") {
    RunConfig rc = default_run_config();
    CHECK(run_config_to_json(rc).dump() == run_config_to_json(rc).dump());
    auto j = run_config_to_json(rc);
    auto it = j.begin();
    CHECK(it.key() == "seed");  // top-level order is fixed, not alphabetical
}

TEST_CASE("domain_nuisance is an optional corpus key with strict entries") {
    // Absent from the default dump: the key only appears once overridden.
    RunConfig rc = default_run_config();
    CHECK(!json::parse(run_config_to_json(rc).dump())["corpus"].contains("domain_nuisance"));

    json j = json::parse(run_config_to_json(rc).dump());
    j["corpus"]["domain_nuisance"] = json::array(
        {{{"gain", 1.0}, {"offset", 0.0}, {"noise_sigma", 0.05}},
         {{"gain", 0.7}, {"offset", 0.2}, {"noise_sigma", 0.1}, {"style_pool", {15, 16}}}});
    RunConfig parsed = run_config_from_json(j);
    REQUIRE(parsed.corpus.nuisance.size() == 2);
    CHECK(parsed.corpus.nuisance[0].gain == 1.0);
    CHECK(parsed.corpus.nuisance[0].style_pool.empty());
    CHECK(parsed.corpus.nuisance[1].noise_sigma == 0.1);
    CHECK(parsed.corpus.nuisance[1].style_pool == std::vector<int>{15, 16});

    // Round trip: a config that carries the key reproduces it exactly.
    auto dumped = run_config_to_json(parsed).dump();
    RunConfig back = run_config_from_json(json::parse(dumped));
    CHECK(run_config_to_json(back).dump() == dumped);

    // Entry keys are strict like every other config object.
    json bad = json::parse(run_config_to_json(rc).dump());
    bad["corpus"]["domain_nuisance"] = json::array({{{"gian", 1.0}}, {{"gain", 1.0}}});
    CHECK_THROWS_WITH_AS(run_config_from_json(bad), doctest::Contains("gian"), ConfigError);

    // Wrong entry count fails validation at parse time.
    json short_list = json::parse(run_config_to_json(rc).dump());
    short_list["corpus"]["domain_nuisance"] = json::array({{{"gain", 1.0}}});
    CHECK_THROWS_WITH_AS(run_config_from_json(short_list), doctest::Contains("domain_nuisance"),
                         ConfigError);
}

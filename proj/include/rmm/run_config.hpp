#pragma once
// Top-level run configuration: one JSON file with corpus / model / corruption
// / train / eval sections plus seed and output_dir. Model geometry (image
// size, patch, vocab, text length) is always derived from the corpus section,
// never read from the file.

#include <cstdint>
#include <string>

#include "json.hpp"
#include "rmm/corpus.hpp"
#include "rmm/corruption.hpp"
#include "rmm/eval.hpp"
#include "rmm/model.hpp"
#include "rmm/trainer.hpp"

namespace rmm {

struct RunConfig {
    CorpusSpec corpus;
    ModelConfig model;
    CorruptionSpec corruption;
    MaskBounds bounds;
    TrainConfig train;
    EvalConfig eval;
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    // Derives model geometry from the corpus and validates every section.
    // max_text_len covers CLS plus the longest possible token sequence.
    void finalize();

    // Corruption spec with the corpus-derived lexicons and vocab filled in.
    CorruptionSpec corruption_for() const;
};

// Defaults for every section, finalized.
RunConfig default_run_config();

nlohmann::ordered_json run_config_to_json(const RunConfig& rc);

// Strict parse over defaults; unknown keys anywhere raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

// Reads and parses path; every failure (unreadable file, bad JSON, unknown
// key, out-of-range value) raises ConfigError.
RunConfig load_run_config(const std::string& path);

}  // namespace rmm

#pragma once
// JSON (de)serialization for every config struct, shared by the run-config
// file format and checkpoints. Parsing is strict: unknown keys and wrong
// types raise ConfigError naming the dotted path.

#include <string>

#include "json.hpp"
#include "rmm/corpus.hpp"
#include "rmm/corruption.hpp"
#include "rmm/eval.hpp"
#include "rmm/model.hpp"
#include "rmm/trainer.hpp"

namespace rmm {

nlohmann::ordered_json corpus_to_json(const CorpusSpec& c);
void corpus_from_json(const nlohmann::json& j, const std::string& path, CorpusSpec& out);

// Model geometry (image size, patch, vocab, text length) is derived from the
// corpus in run configs; geometry_keys toggles whether those keys are
// accepted/emitted (checkpoints carry them, run configs must not).
nlohmann::ordered_json model_to_json(const ModelConfig& m, bool geometry_keys = true);
void model_from_json(const nlohmann::json& j, const std::string& path, ModelConfig& out,
                     bool geometry_keys);

nlohmann::ordered_json corruption_to_json(const CorruptionSpec& c);  // severity + toggles only
void corruption_from_json(const nlohmann::json& j, const std::string& path, CorruptionSpec& out);

nlohmann::ordered_json train_to_json(const TrainConfig& t, const MaskBounds& b);
void train_from_json(const nlohmann::json& j, const std::string& path, TrainConfig& out,
                     MaskBounds& bounds);

nlohmann::ordered_json eval_to_json(const EvalConfig& e);
void eval_from_json(const nlohmann::json& j, const std::string& path, EvalConfig& out);

}  // namespace rmm

// Command-line entry point. Subcommands cover the whole pipeline: corpus
// generation, pre-training, probe/retrieval evaluation, the severity sweep,
// the toggle ablation grid, and the finite-difference gradient check. All
// results are files (JSONL / CSV / JSON) with no timestamps, so identical
// config + seed gives byte-identical outputs.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data/format
// error, 4 numerical failure (non-finite loss, gradient check failure, or a
// broken internal invariant).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rmm/config_json.hpp"
#include "rmm/eval.hpp"
#include "rmm/gradcheck.hpp"
#include "rmm/run_config.hpp"

namespace {

using namespace rmm;

RunConfig load_or_default(const std::string& path) {
    if (path.empty()) return default_run_config();
    return load_run_config(path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

std::string csv_join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                       : comma - pos);
        std::size_t used = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != part.size() || part.empty()) {
            throw ConfigError("--seeds: '" + part + "' is not a non-negative integer");
        }
        seeds.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (seeds.empty()) throw ConfigError("--seeds: need at least one seed");
    return seeds;
}

// Model section equality between a checkpoint and the active run config;
// mismatched dims would silently misuse the stored tensors.
void require_model_match(const ModelConfig& run_model, const ModelConfig& ckpt_model) {
    if (model_to_json(run_model).dump() != model_to_json(ckpt_model).dump()) {
        throw ConfigError("checkpoint model section does not match the run config");
    }
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path) {
    RunConfig rc = load_or_default(config_path);
    std::vector<PairedSample> corpus = generate_corpus(rc.corpus, rc.seed);
    write_corpus_jsonl(out_path, corpus);
    std::cout << "wrote " << corpus.size() << " samples to " << out_path << "\n";
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& corpus_path,
                 const std::string& resume_path) {
    RunConfig rc = load_or_default(config_path);
    std::vector<PairedSample> corpus = read_corpus_jsonl(corpus_path);

    std::optional<ResumeState> resume;
    if (!resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_path);
        if (ckpt.seed != rc.seed) {
            throw ConfigError("checkpoint seed " + std::to_string(ckpt.seed) +
                              " does not match run config seed " + std::to_string(rc.seed));
        }
        require_model_match(rc.model, ckpt.model);
        MaskBounds rb = rc.bounds;
        if (train_to_json(rc.train, rb).dump() != train_to_json(ckpt.train, ckpt.bounds).dump()) {
            throw ConfigError("checkpoint train section does not match the run config");
        }
        if (corruption_to_json(rc.corruption).dump() != corruption_to_json(ckpt.corruption).dump()) {
            throw ConfigError("checkpoint corruption section does not match the run config");
        }
        resume = ResumeState{std::move(ckpt.params), std::move(ckpt.optim), ckpt.step};
    }

    TrainResult tr = train_run(rc.train, rc.model, rc.corruption_for(), rc.bounds, corpus, rc.seed,
                               resume);

    std::string log;
    for (const std::string& line : tr.log_lines) log += line + "\n";
    std::filesystem::path dir(rc.output_dir);
    write_text_file((dir / "train_log.csv").string(), log);

    Checkpoint ckpt;
    ckpt.step = tr.step;
    ckpt.seed = rc.seed;
    ckpt.train = rc.train;
    ckpt.model = rc.model;
    ckpt.corruption = rc.corruption;
    ckpt.bounds = rc.bounds;
    ckpt.params = std::move(tr.params);
    ckpt.optim = std::move(tr.optim);
    std::filesystem::create_directories(dir);
    save_checkpoint((dir / "checkpoint.json").string(), ckpt);
    std::cout << "trained to step " << tr.step << "; outputs in " << rc.output_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& corpus_path,
             const std::string& ckpt_path) {
    RunConfig rc = load_or_default(config_path);
    std::vector<PairedSample> corpus = read_corpus_jsonl(corpus_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    require_model_match(rc.model, ckpt.model);

    ProbeReport probe =
        domain_shift_eval(ckpt.params, rc.model, corpus, rc.corruption_for(), rc.eval, rc.seed);
    RetrievalReport ret =
        retrieval_eval(ckpt.params, rc.model, corpus, rc.corruption_for(), rc.eval, rc.seed);

    auto metrics_json = [](const RetrievalMetrics& m) {
        nlohmann::ordered_json j;
        nlohmann::ordered_json rec;
        for (const auto& [k, v] : m.recall_at) rec[std::to_string(k)] = v;
        j["recall_at"] = rec;
        j["mean_rank"] = m.mean_rank;
        return j;
    };
    nlohmann::ordered_json report;
    report["probe"] = {{"acc_id", probe.acc_id_pct},
                       {"acc_cd", probe.acc_cd_pct},
                       {"drop", probe.drop_pct}};
    report["retrieval"]["standard"] = metrics_json(ret.standard);
    report["retrieval"]["perturbed"] = metrics_json(ret.perturbed);
    report["retrieval"]["delta_mean_rank"] = ret.delta_mean_rank;

    std::filesystem::path out = std::filesystem::path(rc.output_dir) / "eval_report.json";
    write_text_file(out.string(), report.dump(1) + "\n");
    std::cout << report.dump(1) << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& corpus_path,
              const std::string& ckpt_path) {
    RunConfig rc = load_or_default(config_path);
    std::vector<PairedSample> corpus = read_corpus_jsonl(corpus_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    require_model_match(rc.model, ckpt.model);

    std::vector<SweepRow> rows =
        perturbation_sweep(ckpt.params, rc.model, corpus, rc.corruption_for(), rc.eval, rc.seed);
    std::string csv = "severity,accuracy,seed\n";
    for (const SweepRow& r : rows) {
        csv += csv_join({format_double(r.severity), format_double(r.accuracy),
                         std::to_string(rc.seed)}) +
               "\n";
    }
    std::filesystem::path out = std::filesystem::path(rc.output_dir) / "sweep.csv";
    write_text_file(out.string(), csv);
    std::cout << csv;
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& corpus_path,
               const std::string& seeds_text) {
    RunConfig rc = load_or_default(config_path);
    std::vector<PairedSample> corpus = read_corpus_jsonl(corpus_path);
    std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);

    std::vector<AblationRow> rows = ablation_suite(rc.train, rc.model, rc.corruption_for(),
                                                   rc.bounds, corpus, rc.eval, seeds);
    std::string csv = "robust_masking,domain_consistency,modality_resilience,seed,accuracy\n";
    for (const AblationRow& r : rows) {
        csv += csv_join({r.robust_masking ? "1" : "0", r.domain_consistency ? "1" : "0",
                         r.modality_resilience ? "1" : "0", std::to_string(r.seed),
                         format_double(r.accuracy)}) +
               "\n";
    }
    std::filesystem::path out = std::filesystem::path(rc.output_dir) / "ablation.csv";
    write_text_file(out.string(), csv);

    // Per toggle row: mean +- half the min-to-max spread across seeds.
    for (std::size_t base = 0; base < rows.size(); base += seeds.size()) {
        double lo = rows[base].accuracy, hi = rows[base].accuracy, sum = 0.0;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            double a = rows[base + k].accuracy;
            lo = std::min(lo, a);
            hi = std::max(hi, a);
            sum += a;
        }
        char line[160];
        std::snprintf(line, sizeof(line),
                      "robust_masking=%d domain_consistency=%d modality_resilience=%d "
                      "accuracy=%.4f +- %.4f\n",
                      rows[base].robust_masking ? 1 : 0, rows[base].domain_consistency ? 1 : 0,
                      rows[base].modality_resilience ? 1 : 0, sum / static_cast<double>(seeds.size()),
                      (hi - lo) / 2.0);
        std::cout << line;
    }
    return 0;
}

int cmd_gradcheck(const std::string& config_path) {
    RunConfig rc = load_or_default(config_path);
    std::vector<GradCheckResult> results = run_gradcheck(rc.seed);
    bool ok = true;
    for (const GradCheckResult& r : results) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-10s max_rel=%.3e over %zu params %s\n", r.term.c_str(),
                      r.max_rel, r.n_params, r.max_rel < kGradCheckTolerance ? "ok" : "FAIL");
        std::cout << line;
        ok = ok && r.max_rel < kGradCheckTolerance;
    }
    if (!ok) throw NumericalError("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-modal masked-reconstruction pre-training pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_path, corpus_path, ckpt_path, resume_path;
    std::string seeds_text = "1,2,3";

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic paired corpus (JSONL)");
    gen->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    gen->add_option("--out", out_path, "output corpus path")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "run pre-training; writes train_log.csv and checkpoint.json");
    pre->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    pre->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    pre->add_option("--resume", resume_path, "checkpoint to resume from");

    CLI::App* ev = app.add_subcommand("eval", "probe + retrieval evaluation; writes eval_report.json");
    ev->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    ev->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    ev->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();

    CLI::App* sw = app.add_subcommand("sweep", "probe accuracy across severities; writes sweep.csv");
    sw->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    sw->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    sw->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();

    CLI::App* ab = app.add_subcommand("ablate", "train the toggle grid and probe under perturbation; writes ablation.csv");
    ab->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    ab->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    ab->add_option("--seeds", seeds_text, "comma-separated training seeds (default 1,2,3)");

    CLI::App* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients per loss term");
    gc->add_option("--config", config_path, "run config JSON (defaults when omitted)");

    app.add_subcommand("default-config", "print the fully-defaulted run config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(config_path, out_path);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(config_path, corpus_path, resume_path);
        if (app.got_subcommand("eval")) return cmd_eval(config_path, corpus_path, ckpt_path);
        if (app.got_subcommand("sweep")) return cmd_sweep(config_path, corpus_path, ckpt_path);
        if (app.got_subcommand("ablate")) return cmd_ablate(config_path, corpus_path, seeds_text);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(config_path);
        std::cout << run_config_to_json(default_run_config()).dump(2) << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}

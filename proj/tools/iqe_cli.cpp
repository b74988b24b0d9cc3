// Command-line front end: dataset generation, leave-one-out training,
// few-shot adaptation, evaluation, and single-image inference.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "iqe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace iqe;

namespace {

Tokenizer resolve_vocab(const std::string& data_dir, const std::string& vocab_override) {
    if (!vocab_override.empty()) return Tokenizer::load(vocab_override);
    if (!data_dir.empty()) {
        const auto path = fs::path(data_dir) / "vocab.txt";
        if (fs::exists(path)) return Tokenizer::load(path.string());
    }
    return Tokenizer::from_words(Tokenizer::builtin_words());
}

RunConfig resolve_config(const std::string& config_path, uint64_t seed_override, bool has_seed) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::parse_file(config_path);
    if (has_seed) cfg.seed = seed_override;
    cfg.validate();
    return cfg;
}

Model load_model(const RunConfig& cfg, const Tokenizer& tok, const std::string& ckpt_path) {
    Model model(cfg, tok);
    auto params = model.params();
    apply_checkpoint(load_checkpoint(ckpt_path), params);
    return model;
}

int run(int argc, char** argv) {
    CLI::App app{"Prompt-tuned query-embedding anomaly detection on synthetic textures"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multi-domain benchmark");
    std::string gen_out;
    uint64_t gen_seed = 0;
    bool gen_force = false;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--seed", gen_seed, "Generation seed (default 0)");
    gen->add_flag("--force", gen_force, "Overwrite a non-empty output directory");

    // train
    auto* train = app.add_subcommand("train", "Leave-one-out zero-shot training");
    std::string tr_data, tr_holdout, tr_config, tr_out, tr_log;
    uint64_t tr_seed = 0;
    bool tr_has_seed = false, tr_dump = false;
    train->add_option("--data", tr_data, "Dataset root directory")->required();
    train->add_option("--holdout", tr_holdout, "Domain excluded from training")->required();
    train->add_option("--config", tr_config, "Config file (key = value lines)");
    train->add_option("--out", tr_out, "Checkpoint output path")->required();
    train->add_option("--log", tr_log, "Loss log CSV path (default: <out>.loss.csv)");
    train->add_option("--seed", tr_seed, "Override the config seed");
    train->add_flag("--dump-config", tr_dump, "Print the effective config and exit");

    // adapt
    auto* adapt = app.add_subcommand("adapt", "Few-shot adaptation toward a target domain");
    std::string ad_ckpt, ad_data, ad_target, ad_config, ad_out;
    int ad_k = 4;
    uint64_t ad_seed = 0;
    bool ad_has_seed = false;
    adapt->add_option("--ckpt", ad_ckpt, "Zero-shot checkpoint to adapt")->required();
    adapt->add_option("--data", ad_data, "Dataset root directory")->required();
    adapt->add_option("--target", ad_target, "Target domain supplying the K samples")->required();
    adapt->add_option("--k", ad_k, "Number of labeled target samples (0,2,4,8,16)")->required();
    adapt->add_option("--config", ad_config, "Config file (must match the checkpoint)");
    adapt->add_option("--out", ad_out, "Adapted checkpoint output path")->required();
    adapt->add_option("--seed", ad_seed, "Override the config seed");

    // eval
    auto* eval = app.add_subcommand("eval", "Score a domain's test split and write a report");
    std::vector<std::string> ev_ckpts;
    std::string ev_data, ev_domain, ev_config, ev_report;
    int ev_seeds = 1;
    double ev_map_alpha = -1.0;
    bool ev_random = false;
    eval->add_option("--ckpt", ev_ckpts,
                     "Checkpoint path(s); one per seed, or one shared by all seeds");
    eval->add_option("--data", ev_data, "Dataset root directory")->required();
    eval->add_option("--domain", ev_domain, "Domain to evaluate, or 'all'")->required();
    eval->add_option("--seeds", ev_seeds, "Number of seed rows (default 1)");
    eval->add_option("--config", ev_config, "Config file (must match the checkpoints)");
    eval->add_option("--report", ev_report, "Report CSV output path")->required();
    eval->add_option("--map-alpha", ev_map_alpha, "Override the fusion weight for this evaluation");
    eval->add_flag("--random-init", ev_random,
                   "Score with untrained models seeded per row instead of checkpoints");

    // infer
    auto* infer = app.add_subcommand("infer", "Write the anomaly map for one image");
    std::string in_ckpt, in_image, in_out, in_config, in_vocab, in_class = "object";
    infer->add_option("--ckpt", in_ckpt, "Checkpoint path")->required();
    infer->add_option("--image", in_image, "Input PGM image")->required();
    infer->add_option("--out-map", in_out, "Output PGM anomaly map")->required();
    infer->add_option("--config", in_config, "Config file (must match the checkpoint)");
    infer->add_option("--vocab", in_vocab, "Vocabulary file (default: built-in list)");
    infer->add_option("--class-word", in_class, "Class word for the prompts (default: object)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or a one-line diagnostic
        return rc == 0 ? 0 : 2;
    }
    tr_has_seed = train->count("--seed") > 0;
    ad_has_seed = adapt->count("--seed") > 0;

    if (gen->parsed()) {
        generate_dataset(default_domain_specs(), gen_seed, gen_out, gen_force);
        std::cout << "dataset written to " << gen_out << "\n";
        return 0;
    }

    if (train->parsed()) {
        auto cfg = resolve_config(tr_config, tr_seed, tr_has_seed);
        if (tr_dump) {
            std::cout << cfg.dump();
            return 0;
        }
        auto tok = resolve_vocab(tr_data, "");
        auto data = load_dataset(tr_data);
        Model model(cfg, tok);
        FeatureCache cache;
        const std::string log_path = tr_log.empty() ? tr_out + ".loss.csv" : tr_log;
        std::ofstream log(log_path, std::ios::binary);
        if (!log) throw std::runtime_error("cannot write loss log: " + log_path);
        auto result = train_zero_shot(model, data, tr_holdout, cache, &log);
        auto params = model.params();
        save_checkpoint(tr_out, params);
        std::cout << "checkpoint written to " << tr_out << " (final epoch loss "
                  << (result.epoch_mean_loss.empty() ? 0.0 : result.epoch_mean_loss.back()) << ")\n";
        return 0;
    }

    if (adapt->parsed()) {
        auto cfg = resolve_config(ad_config, ad_seed, ad_has_seed);
        auto tok = resolve_vocab(ad_data, "");
        auto data = load_dataset(ad_data);
        Model model = cfg.few_shot_mode == "joint" ? Model(cfg, tok)
                                                   : load_model(cfg, tok, ad_ckpt);
        FeatureCache cache;
        few_shot_adapt(model, data, ad_target, ad_k, cache);
        auto params = model.params();
        save_checkpoint(ad_out, params);
        std::cout << "adapted checkpoint written to " << ad_out << "\n";
        return 0;
    }

    if (eval->parsed()) {
        auto cfg = resolve_config(ev_config, 0, false);
        auto tok = resolve_vocab(ev_data, "");
        auto data = load_dataset(ev_data);
        if (!ev_random && ev_ckpts.empty())
            throw std::runtime_error("eval needs --ckpt or --random-init");
        if (!ev_random && ev_ckpts.size() > 1 && (int)ev_ckpts.size() != ev_seeds)
            throw std::runtime_error("checkpoint count must be 1 or equal to --seeds");

        std::vector<const LoadedDomain*> domains;
        if (ev_domain == "all") {
            for (const auto& d : data.domains) domains.push_back(&d);
        } else {
            const auto* d = data.find(ev_domain);
            if (!d) throw std::runtime_error("domain not found: " + ev_domain);
            domains.push_back(d);
        }
        const double alpha = ev_map_alpha >= 0 ? ev_map_alpha : cfg.map_alpha;

        FeatureCache cache;
        std::vector<EvalRow> rows;
        for (const auto* dom : domains) {
            for (int seed = 0; seed < ev_seeds; ++seed) {
                RunConfig row_cfg = cfg;
                row_cfg.seed = (uint64_t)seed;
                Model model = ev_random
                                  ? Model(row_cfg, tok)
                                  : load_model(cfg, tok,
                                               ev_ckpts.size() == 1 ? ev_ckpts[0]
                                                                    : ev_ckpts[(size_t)seed]);
                auto row = evaluate_domain(model, *dom, cache, alpha);
                row.seed_label = std::to_string(seed);
                rows.push_back(row);
            }
        }
        write_report(ev_report, rows);
        std::cout << "report written to " << ev_report << "\n";
        return 0;
    }

    if (infer->parsed()) {
        auto cfg = resolve_config(in_config, 0, false);
        auto tok = resolve_vocab("", in_vocab);
        Model model = load_model(cfg, tok, in_ckpt);
        auto img = read_pgm(in_image);
        auto feats = model.encode_image(pgm_to_tensor(img));
        auto out = model.forward(feats, in_class);
        auto fused = model.fused_map(out);
        auto normalized = minmax_normalize(fused);
        write_pgm(in_out, fused.cols(), fused.rows(), normalized.data());
        std::cout << "anomaly map written to " << in_out << " (score " << anomaly_score(fused)
                  << ")\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

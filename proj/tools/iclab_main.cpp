// iclab: train and probe small sequence models on episodic image-label
// streams with controllable distributional structure (burstiness, Zipfian
// class marginals, label multiplicity, within-class variation).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "iclab/distcheck.hpp"
#include "iclab/errors.hpp"
#include "iclab/harness.hpp"
#include "iclab/plots.hpp"

using namespace iclab;

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("ICLAB_OUT")) {
        return env;
    }
    return "runs";
}

// Flags shared by train / sweep / validate-data. Mirrors RunConfig.
void add_run_options(CLI::App* cmd, RunConfig& cfg, std::string& policy, double& sigma,
                     std::string& dataset, std::string& model) {
    cmd->add_option("--dataset", dataset, "synthetic|omniglot|archive");
    cmd->add_option("--classes", cfg.synthetic_classes, "synthetic class count");
    cmd->add_option("--image-size", cfg.image_size, "square image side");
    cmd->add_option("--omniglot-root", cfg.omniglot_root, "omniglot directory tree");
    cmd->add_option("--registry", cfg.registry_archive, "registry archive file");
    cmd->add_flag("--augment", cfg.augment, "x8 class augmentation (rotations+flips)");
    cmd->add_option("--holdout-fraction", cfg.holdout_fraction, "classes held out of training");
    cmd->add_option("--p-bursty", cfg.dist.p_bursty, "probability an episode is bursty");
    cmd->add_option("--zipf-alpha", cfg.dist.zipf_alpha, "class marginal skew (0 = uniform)");
    cmd->add_option("--label-multiplicity", cfg.dist.label_multiplicity, "labels per class");
    cmd->add_option("--context-pairs", cfg.dist.context_pairs, "image-label pairs per episode");
    cmd->add_option("--bursty-shots", cfg.dist.bursty_shots, "query repeats in bursty episodes");
    cmd->add_option("--eval-shots", cfg.dist.eval_shots, "shots per class in few-shot eval");
    cmd->add_option("--eval-ways", cfg.dist.eval_ways, "classes in few-shot eval");
    cmd->add_option("--exemplar-policy", policy, "single|noise|full");
    cmd->add_option("--noise-sigma", sigma, "pixel noise for the noise policy");
    cmd->add_option("--model", model, "transformer|rnn|lstm");
    cmd->add_option("--layers", cfg.layers, "backbone depth");
    cmd->add_option("--dim", cfg.model_dim, "token/model width");
    cmd->add_option("--heads", cfg.heads, "attention heads");
    cmd->add_option("--mlp-hidden", cfg.mlp_hidden, "transformer MLP width (0 = 4*dim)");
    cmd->add_option("--recurrent-hidden", cfg.recurrent_hidden,
                    "recurrent hidden size (0 = parameter-match the transformer)");
    cmd->add_option("--embedder-blocks", cfg.embedder_blocks, "resnet blocks per group");
    cmd->add_option("--embedder-channels", cfg.embedder_channels, "resnet channels per group")
        ->delimiter(',');
    cmd->add_option("--seed", cfg.seed, "run seed");
    cmd->add_option("--steps", cfg.total_steps, "optimizer steps");
    cmd->add_option("--batch-size", cfg.batch_size, "episodes per step");
    cmd->add_option("--max-lr", cfg.lr.max_lr, "peak learning rate");
    cmd->add_option("--warmup-steps", cfg.lr.warmup_steps, "linear warmup length");
    cmd->add_option("--eval-every", cfg.eval_every, "steps between eval blocks");
    cmd->add_option("--eval-episodes", cfg.eval_episodes, "episodes per eval metric");
    cmd->add_option("--checkpoint-every", cfg.checkpoint_every, "0 = final checkpoint only");
    cmd->add_option("--out", cfg.out_dir, "output directory");
}

// Keyed text config: one `key=value` per line, '#' comments. Values from the
// file apply unless the same flag is given on the command line.
std::vector<std::string> merge_config_file(int argc, char** argv) {
    std::vector<std::string> args;
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            config_path = argv[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
        } else {
            args.push_back(std::move(a));
        }
    }
    if (config_path.empty()) {
        return args;
    }
    std::ifstream in(config_path);
    if (!in) {
        throw iclab::LoadError("cannot open config file: " + config_path);
    }
    auto given = [&](const std::string& flag) {
        for (const std::string& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw iclab::ConfigError(config_path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        const size_t vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        const std::string flag = "--" + key;
        if (!given(flag)) {
            args.push_back(flag + "=" + value);
        }
    }
    return args;
}

void finalize_config(RunConfig& cfg, const std::string& policy, double sigma,
                     const std::string& dataset, const std::string& model,
                     const std::string& subcmd) {
    cfg.dist.exemplar_policy = ExemplarPolicy::parse(policy, sigma);
    if (dataset == "synthetic") {
        cfg.dataset = DatasetSource::synthetic;
    } else if (dataset == "omniglot") {
        cfg.dataset = DatasetSource::omniglot;
    } else if (dataset == "archive") {
        cfg.dataset = DatasetSource::archive;
    } else {
        throw iclab::ConfigError("unknown dataset '" + dataset + "'");
    }
    cfg.model_kind = parse_backbone(model);
    if (cfg.out_dir.empty()) {
        cfg.out_dir = default_out_root() + "/" + subcmd + "_" + backbone_name(cfg.model_kind) +
                      "_seed" + std::to_string(cfg.seed);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"episodic image-label sequence lab"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string policy = "single";
    double sigma = 0.0;
    std::string dataset = "synthetic";
    std::string model = "transformer";

    auto* train = app.add_subcommand("train", "train a model and log metrics");
    std::string resume;
    add_run_options(train, cfg, policy, sigma, dataset, model);
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--config", "keyed text file, one `key=value` per line (merged before parsing)");

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpointed run");
    std::string run_dir, ckpt_path;
    int eval_n = 512;
    uint64_t eval_seed = 1;
    evalc->add_option("--run-dir", run_dir, "directory holding config.json + ckpt_final.bin")
        ->required();
    evalc->add_option("--checkpoint", ckpt_path, "explicit checkpoint path");
    evalc->add_option("--episodes", eval_n, "episodes per metric");
    evalc->add_option("--eval-seed", eval_seed, "evaluation stream seed");

    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep over lr and warmup");
    int sweep_n = 15;
    int workers = 1;
    SweepRanges ranges;
    add_run_options(sweep, cfg, policy, sigma, dataset, model);
    sweep->add_option("--samples", sweep_n, "number of sweep points");
    sweep->add_option("--workers", workers, "parallel runs");
    sweep->add_option("--lr-min", ranges.lr_min, "lr range lower bound");
    sweep->add_option("--lr-max", ranges.lr_max, "lr range upper bound");
    sweep->add_option("--warmup-min", ranges.warmup_min, "warmup range lower bound");
    sweep->add_option("--warmup-max", ranges.warmup_max, "warmup range upper bound");
    sweep->add_option("--config", "keyed text file, one `key=value` per line (merged before parsing)");

    auto* validate =
        app.add_subcommand("validate-data", "statistical checks on the episode stream");
    int64_t v_episodes = 100000;
    add_run_options(validate, cfg, policy, sigma, dataset, model);
    validate->add_option("--episodes", v_episodes, "episodes to stream");
    validate->add_option("--config", "keyed text file, one `key=value` per line (merged before parsing)");

    auto* plot = app.add_subcommand("plot", "curves and tables from metrics logs");
    std::vector<std::string> logs;
    std::string plot_out = "plots";
    double window = 0.2;
    plot->add_option("--logs", logs, "metrics.jsonl files, one per seed")->required();
    plot->add_option("--out", plot_out, "output directory");
    plot->add_option("--window", window, "final-window fraction for bars");

    std::vector<std::string> args;
    try {
        args = merge_config_file(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    try {
        std::reverse(args.begin(), args.end());  // CLI11 wants reversed args
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train) {
            finalize_config(cfg, policy, sigma, dataset, model, "train");
            RunResult res = run_train(cfg, resume);
            std::cout << "metrics: " << res.metrics_path << "\n"
                      << "checkpoint: " << res.checkpoint_path << "\n";
        } else if (*evalc) {
            std::ifstream cf(run_dir + "/config.json");
            if (!cf) {
                throw iclab::LoadError("no config.json under " + run_dir);
            }
            std::stringstream ss;
            ss << cf.rdbuf();
            RunConfig loaded = RunConfig::from_json(ss.str());
            if (ckpt_path.empty()) {
                ckpt_path = run_dir + "/ckpt_final.bin";
            }
            EvalReport report = evaluate_checkpoint(loaded, ckpt_path, eval_n, eval_seed);
            std::cout << report.to_text();
        } else if (*sweep) {
            finalize_config(cfg, policy, sigma, dataset, model, "sweep");
            auto results = run_sweep(cfg, sweep_n, ranges, workers);
            for (const auto& r : results) {
                std::cout << r.out_dir << " final step " << r.final_step << "\n";
            }
        } else if (*validate) {
            finalize_config(cfg, policy, sigma, dataset, model, "validate");
            cfg.validate();
            ClassRegistry reg = build_registry(cfg);
            EpisodeGenerator gen(cfg.dist, reg, cfg.seed);
            ValidationReport rep = validate_stream(gen, v_episodes, cfg.seed);
            std::cout << rep.to_text();
            return rep.pass ? 0 : 2;
        } else if (*plot) {
            PlotOutputs outputs = emit_plots(logs, plot_out, window);
            for (const auto& w : outputs.warnings) {
                std::cerr << "warning: " << w << "\n";
            }
            for (const auto& f : outputs.files) {
                std::cout << f << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

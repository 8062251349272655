#include "iclab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <atomic>
#include <functional>
#include <thread>

#include <json.hpp>

#include "iclab/checkpoint.hpp"
#include "iclab/distcheck.hpp"
#include "iclab/errors.hpp"
#include "iclab/metrics_log.hpp"

namespace fs = std::filesystem;

namespace iclab {

using nlohmann::json;

namespace {

const char* dataset_name(DatasetSource s) {
    switch (s) {
        case DatasetSource::synthetic: return "synthetic";
        case DatasetSource::omniglot: return "omniglot";
        case DatasetSource::archive: return "archive";
    }
    return "?";
}

DatasetSource parse_dataset(const std::string& s) {
    if (s == "synthetic") return DatasetSource::synthetic;
    if (s == "omniglot") return DatasetSource::omniglot;
    if (s == "archive") return DatasetSource::archive;
    throw ConfigError("unknown dataset '" + s + "' (synthetic|omniglot|archive)");
}

json config_to_json_obj(const RunConfig& c) {
    return json{
        {"dataset", dataset_name(c.dataset)},
        {"synthetic_classes", c.synthetic_classes},
        {"image_size", c.image_size},
        {"omniglot_root", c.omniglot_root},
        {"registry_archive", c.registry_archive},
        {"augment", c.augment},
        {"holdout_fraction", c.holdout_fraction},
        {"p_bursty", c.dist.p_bursty},
        {"zipf_alpha", c.dist.zipf_alpha},
        {"label_multiplicity", c.dist.label_multiplicity},
        {"context_pairs", c.dist.context_pairs},
        {"bursty_shots", c.dist.bursty_shots},
        {"eval_shots", c.dist.eval_shots},
        {"eval_ways", c.dist.eval_ways},
        {"exemplar_policy", c.dist.exemplar_policy.name()},
        {"noise_sigma", c.dist.exemplar_policy.noise_sigma},
        {"model", backbone_name(c.model_kind)},
        {"layers", c.layers},
        {"model_dim", c.model_dim},
        {"heads", c.heads},
        {"mlp_hidden", c.mlp_hidden},
        {"recurrent_hidden", c.recurrent_hidden},
        {"embedder_blocks", c.embedder_blocks},
        {"embedder_channels", c.embedder_channels},
        {"seed", c.seed},
        {"total_steps", c.total_steps},
        {"batch_size", c.batch_size},
        {"max_lr", c.lr.max_lr},
        {"warmup_steps", c.lr.warmup_steps},
        {"adam_beta1", c.adam.beta1},
        {"adam_beta2", c.adam.beta2},
        {"adam_eps", c.adam.eps},
        {"eval_every", c.eval_every},
        {"eval_episodes", c.eval_episodes},
        {"checkpoint_every", c.checkpoint_every},
        {"out_dir", c.out_dir},
    };
}

}  // namespace

std::string RunConfig::to_json() const {
    return config_to_json_obj(*this).dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    c.dataset = parse_dataset(j.value("dataset", "synthetic"));
    c.synthetic_classes = j.value("synthetic_classes", c.synthetic_classes);
    c.image_size = j.value("image_size", c.image_size);
    c.omniglot_root = j.value("omniglot_root", c.omniglot_root);
    c.registry_archive = j.value("registry_archive", c.registry_archive);
    c.augment = j.value("augment", c.augment);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.dist.p_bursty = j.value("p_bursty", c.dist.p_bursty);
    c.dist.zipf_alpha = j.value("zipf_alpha", c.dist.zipf_alpha);
    c.dist.label_multiplicity = j.value("label_multiplicity", c.dist.label_multiplicity);
    c.dist.context_pairs = j.value("context_pairs", c.dist.context_pairs);
    c.dist.bursty_shots = j.value("bursty_shots", c.dist.bursty_shots);
    c.dist.eval_shots = j.value("eval_shots", c.dist.eval_shots);
    c.dist.eval_ways = j.value("eval_ways", c.dist.eval_ways);
    c.dist.exemplar_policy =
        ExemplarPolicy::parse(j.value("exemplar_policy", "single"), j.value("noise_sigma", 0.0));
    c.model_kind = parse_backbone(j.value("model", "transformer"));
    c.layers = j.value("layers", c.layers);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.heads = j.value("heads", c.heads);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.recurrent_hidden = j.value("recurrent_hidden", c.recurrent_hidden);
    c.embedder_blocks = j.value("embedder_blocks", c.embedder_blocks);
    c.embedder_channels = j.value("embedder_channels", c.embedder_channels);
    c.seed = j.value("seed", c.seed);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr.max_lr = j.value("max_lr", c.lr.max_lr);
    c.lr.warmup_steps = j.value("warmup_steps", c.lr.warmup_steps);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.out_dir = j.value("out_dir", c.out_dir);
    return c;
}

uint64_t RunConfig::trajectory_digest() const {
    json j = config_to_json_obj(*this);
    j.erase("total_steps");
    j.erase("eval_every");
    j.erase("eval_episodes");
    j.erase("checkpoint_every");
    j.erase("out_dir");
    const std::string canon = j.dump();
    uint64_t h = 0xCBF29CE484222325ull;
    for (char ch : canon) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001B3ull;
    }
    return h;
}

void RunConfig::validate() const {
    dist.validate();
    if (total_steps < 0 || batch_size < 1 || eval_every < 1 || eval_episodes < 1) {
        throw ConfigError("run config: bad steps/batch/eval settings");
    }
    if (dataset == DatasetSource::synthetic && synthetic_classes < 2) {
        throw ConfigError("run config: synthetic dataset needs >= 2 classes");
    }
    if (dataset == DatasetSource::omniglot && omniglot_root.empty()) {
        throw ConfigError("run config: omniglot dataset needs --omniglot-root");
    }
    if (dataset == DatasetSource::archive && registry_archive.empty()) {
        throw ConfigError("run config: archive dataset needs --registry");
    }
}

ClassRegistry build_registry(const RunConfig& cfg) {
    ClassRegistry reg;
    switch (cfg.dataset) {
        case DatasetSource::synthetic:
            reg = synth_classes(cfg.synthetic_classes, cfg.seed, cfg.image_size, cfg.image_size,
                                {20, cfg.holdout_fraction});
            break;
        case DatasetSource::omniglot: {
            OmniglotOptions opts;
            opts.image_h = cfg.image_size;
            opts.image_w = cfg.image_size;
            opts.holdout_fraction = cfg.holdout_fraction;
            opts.split_seed = cfg.seed;
            reg = load_omniglot(cfg.omniglot_root, opts);
            break;
        }
        case DatasetSource::archive:
            reg = load_registry(cfg.registry_archive);
            break;
    }
    if (cfg.augment) {
        reg = augment_x8(reg);
    }
    return reg;
}

ModelConfig build_model_config(const RunConfig& cfg, int label_count) {
    ModelConfig mc;
    mc.kind = cfg.model_kind;
    mc.embedder.blocks_per_group = cfg.embedder_blocks;
    mc.embedder.channels = cfg.embedder_channels;
    mc.embedder.out_dim = cfg.model_dim;
    mc.embedder.image_h = cfg.image_size;
    mc.embedder.image_w = cfg.image_size;
    mc.transformer.layers = cfg.layers;
    mc.transformer.dim = cfg.model_dim;
    mc.transformer.heads = cfg.heads;
    mc.transformer.mlp_hidden = cfg.mlp_hidden;
    mc.recurrent.layers = cfg.layers;
    mc.label_count = label_count;
    mc.context_pairs = cfg.dist.context_pairs;
    if (cfg.model_kind != BackboneKind::transformer) {
        if (cfg.recurrent_hidden > 0) {
            mc.recurrent.hidden_dim = cfg.recurrent_hidden;
        } else {
            // Match the parameter count of the transformer this run would
            // otherwise use.
            ModelConfig ref = mc;
            ref.kind = BackboneKind::transformer;
            const int64_t target = Model(ref, 0).count_params().total;
            mc.recurrent.hidden_dim = match_hidden_dim(cfg.model_kind, cfg.layers, ref, target);
        }
    }
    return mc;
}

namespace {

struct Evaluators {
    const RunConfig* cfg;
    const EpisodeGenerator* gen;
    const Model* model;

    std::vector<EvalRecord> run_kind(const char* stream, int64_t step,
                                     const std::function<Episode(Rng&)>& make) const {
        Rng rng = Rng::stream(cfg->seed, stream, static_cast<uint64_t>(step));
        std::vector<Episode> eps;
        eps.reserve(static_cast<size_t>(cfg->eval_episodes));
        for (int i = 0; i < cfg->eval_episodes; ++i) {
            eps.push_back(make(rng));
        }
        std::vector<EvalRecord> records;
        records.reserve(eps.size());
        const size_t chunk = static_cast<size_t>(cfg->batch_size);
        for (size_t ofs = 0; ofs < eps.size(); ofs += chunk) {
            const size_t n = std::min(chunk, eps.size() - ofs);
            std::span<const Episode> batch(eps.data() + ofs, n);
            Tensor logits = model->query_logits_eval(batch);
            auto recs = make_records(batch, logits);
            records.insert(records.end(), recs.begin(), recs.end());
        }
        return records;
    }

    void emit(MetricsLog& log, int64_t step) const {
        auto row = [&](const std::string& name, double value, const char* kind) {
            log.write_row({step, name, value, kind, cfg->seed});
        };
        {
            auto recs = run_kind("eval-fewshot-holdout", step, [&](Rng& r) {
                return gen->make_fewshot_eval(r, FewshotPool::holdout);
            });
            row("fewshot_holdout/restricted", restricted_two_way_accuracy(recs).mean,
                "fewshot_eval");
            row("fewshot_holdout/multiclass", full_multiclass_accuracy(recs).mean,
                "fewshot_eval");
            row("fewshot_holdout/context_label_freq", context_label_frequency(recs).mean,
                "fewshot_eval");
        }
        {
            auto recs = run_kind("eval-fewshot-trained", step, [&](Rng& r) {
                return gen->make_fewshot_eval(r, FewshotPool::trained);
            });
            row("fewshot_trained/restricted", restricted_two_way_accuracy(recs).mean,
                "fewshot_eval");
            row("fewshot_trained/multiclass", full_multiclass_accuracy(recs).mean,
                "fewshot_eval");
        }
        {
            auto recs = run_kind("eval-inweights-all", step, [&](Rng& r) {
                return gen->make_inweights_eval(r, QueryPool::all);
            });
            row("inweights_all/multiclass", inweights_accuracy(recs, QueryPool::all).mean,
                "inweights_eval");
        }
        if (cfg->dist.zipf_alpha > 0.0) {
            auto common = run_kind("eval-inweights-common", step, [&](Rng& r) {
                return gen->make_inweights_eval(r, QueryPool::common10);
            });
            row("inweights_common10/multiclass",
                inweights_accuracy(common, QueryPool::common10).mean, "inweights_eval");
            auto rare = run_kind("eval-inweights-rare", step, [&](Rng& r) {
                return gen->make_inweights_eval(r, QueryPool::rare);
            });
            row("inweights_rare/multiclass", inweights_accuracy(rare, QueryPool::rare).mean,
                "inweights_eval");
        }
    }
};

}  // namespace

RunResult run_train(const RunConfig& cfg_in, const std::string& resume_from) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    if (cfg.out_dir.empty()) {
        throw ConfigError("run_train: out_dir must be set");
    }
    fs::create_directories(cfg.out_dir);

    ClassRegistry reg = build_registry(cfg);
    EpisodeGenerator gen(cfg.dist, reg, cfg.seed);
    ModelConfig mc = build_model_config(cfg, gen.label_count());

    int64_t start_step = 0;
    Model model(mc, cfg.seed);
    AdamState adam;
    adam.cfg = cfg.adam;
    double resume_loss_accum = 0.0, resume_acc_accum = 0.0;
    int64_t resume_accum_n = 0;
    if (!resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_from);
        if (ckpt.config_digest != cfg.trajectory_digest()) {
            throw ConfigError("resume: checkpoint was written by a different configuration");
        }
        model = Model(mc, std::move(ckpt.params));
        adam = std::move(ckpt.adam);
        adam.cfg = cfg.adam;
        start_step = ckpt.step;
        resume_loss_accum = ckpt.loss_accum;
        resume_acc_accum = ckpt.acc_accum;
        resume_accum_n = ckpt.accum_n;
    }

    {
        std::ofstream cf(cfg.out_dir + "/config.json");
        cf << cfg.to_json() << "\n";
    }

    const std::string metrics_path = cfg.out_dir + "/metrics.jsonl";
    const bool append = !resume_from.empty() && fs::exists(metrics_path);
    MetricsLog log(metrics_path, append);
    if (!append) {
        auto counts = model.count_params();
        json header = config_to_json_obj(cfg);
        header.erase("total_steps");  // so resumed and straight runs share a header
        header.erase("out_dir");
        header["type"] = "header";
        header["label_count"] = gen.label_count();
        header["params_total"] = counts.total;
        header["params_backbone"] = counts.backbone;
        if (cfg.model_kind != BackboneKind::transformer) {
            header["recurrent_hidden_used"] = mc.recurrent.hidden_dim;
        }
        log.write_header(header.dump());
    }

    Evaluators ev{&cfg, &gen, &model};
    StreamStats stats(gen.sampler().size(), cfg.dist.bursty_shots, cfg.dist.context_pairs);

    double loss_accum = resume_loss_accum;
    double acc_accum = resume_acc_accum;
    int64_t accum_n = resume_accum_n;

    auto write_ckpt = [&](int64_t step, const std::string& name) {
        Checkpoint ckpt;
        ckpt.config_digest = cfg.trajectory_digest();
        ckpt.step = step;
        ckpt.params = model.params();
        ckpt.adam = adam;
        ckpt.loss_accum = loss_accum;
        ckpt.acc_accum = acc_accum;
        ckpt.accum_n = accum_n;
        save_checkpoint(ckpt, cfg.out_dir + "/" + name);
    };

    if (start_step == 0) {
        ev.emit(log, 0);
        log.flush();
    }

    for (int64_t step = start_step + 1; step <= cfg.total_steps; ++step) {
        try {
            Rng rng = Rng::stream(cfg.seed, "train", static_cast<uint64_t>(step));
            std::vector<Episode> batch;
            std::vector<int64_t> targets;
            batch.reserve(static_cast<size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) {
                batch.push_back(gen.make_training_episode(rng));
                targets.push_back(batch.back().target);
                stats.observe(batch.back(), reg, gen.sampler());
            }
            Tape tape;
            auto pv = tape.attach(model.params());
            Var logits = model.query_logits(tape, batch, pv);
            Var l = loss(logits, targets);
            loss_accum += l.val().data[0];
            // batch multiclass accuracy from the same logits
            {
                const Tensor& lv = logits.val();
                int64_t correct = 0;
                for (int i = 0; i < cfg.batch_size; ++i) {
                    const double* row = lv.data.data() + static_cast<int64_t>(i) * lv.dim(1);
                    int64_t am = 0;
                    for (int64_t j = 1; j < lv.dim(1); ++j) {
                        if (row[j] > row[am]) am = j;
                    }
                    if (am == targets[static_cast<size_t>(i)]) ++correct;
                }
                acc_accum += static_cast<double>(correct) / cfg.batch_size;
            }
            ++accum_n;
            GradMap grads = tape.backward(l);
            adam_step(model.params(), grads, adam, lr_at(step, cfg.lr));
        } catch (const NumericError& e) {
            write_ckpt(step - 1, "ckpt_abort_step" + std::to_string(step) + ".bin");
            log.flush();
            throw NumericError("step " + std::to_string(step) + ": " + e.what() +
                               " (checkpoint written)");
        }

        const bool eval_now = step % cfg.eval_every == 0;
        if (eval_now) {
            if (stats.holdout_hits != 0) {
                throw ConfigError("holdout class leaked into training episodes");
            }
            log.write_row({step, "train/loss", loss_accum / static_cast<double>(accum_n),
                           "train", cfg.seed});
            log.write_row({step, "train/accuracy", acc_accum / static_cast<double>(accum_n),
                           "train", cfg.seed});
            loss_accum = acc_accum = 0.0;
            accum_n = 0;
            ev.emit(log, step);
            log.flush();
            std::cerr << "[" << cfg.out_dir << "] step " << step << "/" << cfg.total_steps
                      << "\n";
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
            step != cfg.total_steps) {
            write_ckpt(step, "ckpt_" + std::to_string(step) + ".bin");
        }
    }

    write_ckpt(cfg.total_steps, "ckpt_final.bin");
    log.flush();
    return RunResult{cfg.out_dir, metrics_path, cfg.out_dir + "/ckpt_final.bin",
                     cfg.total_steps};
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    for (const auto& s : summaries) {
        os << s.metric << ": " << s.mean << " (n=" << s.n << ")\n";
    }
    return os.str();
}

EvalReport evaluate_checkpoint(const RunConfig& cfg_in, const std::string& checkpoint_path,
                               int episodes, uint64_t eval_seed) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    cfg.eval_episodes = episodes;
    ClassRegistry reg = build_registry(cfg);
    EpisodeGenerator gen(cfg.dist, reg, cfg.seed);
    ModelConfig mc = build_model_config(cfg, gen.label_count());
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (ckpt.config_digest != cfg.trajectory_digest()) {
        throw ConfigError("evaluate: checkpoint was written by a different configuration");
    }
    Model model(mc, std::move(ckpt.params));

    EvalReport report;
    auto add = [&](const char* name, AccuracySummary s) {
        s.metric = name;
        report.summaries.push_back(std::move(s));
    };
    Evaluators ev{&cfg, &gen, &model};
    {
        auto recs = ev.run_kind("report-fewshot-holdout", static_cast<int64_t>(eval_seed),
                                [&](Rng& r) { return gen.make_fewshot_eval(r, FewshotPool::holdout); });
        add("fewshot_holdout/restricted", restricted_two_way_accuracy(recs));
        add("fewshot_holdout/multiclass", full_multiclass_accuracy(recs));
        add("fewshot_holdout/context_label_freq", context_label_frequency(recs));
    }
    {
        auto recs = ev.run_kind("report-fewshot-trained", static_cast<int64_t>(eval_seed),
                                [&](Rng& r) { return gen.make_fewshot_eval(r, FewshotPool::trained); });
        add("fewshot_trained/restricted", restricted_two_way_accuracy(recs));
        add("fewshot_trained/multiclass", full_multiclass_accuracy(recs));
    }
    {
        auto recs = ev.run_kind("report-inweights", static_cast<int64_t>(eval_seed),
                                [&](Rng& r) { return gen.make_inweights_eval(r, QueryPool::all); });
        add("inweights_all/multiclass", inweights_accuracy(recs, QueryPool::all));
    }
    if (cfg.dist.zipf_alpha > 0.0) {
        auto common = ev.run_kind("report-inweights-common", static_cast<int64_t>(eval_seed),
                                  [&](Rng& r) { return gen.make_inweights_eval(r, QueryPool::common10); });
        add("inweights_common10/multiclass", inweights_accuracy(common, QueryPool::common10));
        auto rare = ev.run_kind("report-inweights-rare", static_cast<int64_t>(eval_seed),
                                [&](Rng& r) { return gen.make_inweights_eval(r, QueryPool::rare); });
        add("inweights_rare/multiclass", inweights_accuracy(rare, QueryPool::rare));
    }
    return report;
}

std::vector<SweepSample> plan_sweep(const RunConfig& base, int n_samples,
                                    const SweepRanges& ranges) {
    if (n_samples < 1 || ranges.lr_min <= 0 || ranges.lr_max < ranges.lr_min ||
        ranges.warmup_min < 1 || ranges.warmup_max < ranges.warmup_min) {
        throw ConfigError("plan_sweep: bad sample count or ranges");
    }
    Rng rng = Rng::stream(base.seed, "sweep-plan");
    std::vector<SweepSample> plan;
    for (int i = 0; i < n_samples; ++i) {
        SweepSample s;
        s.max_lr = std::exp(rng.uniform(std::log(ranges.lr_min), std::log(ranges.lr_max)));
        const double lw = rng.uniform(std::log(static_cast<double>(ranges.warmup_min)),
                                      std::log(static_cast<double>(ranges.warmup_max)));
        s.warmup_steps = static_cast<int64_t>(std::llround(std::exp(lw)));
        s.seed = mix_seed(base.seed, "sweep-run", static_cast<uint64_t>(i));
        s.out_dir = base.out_dir + "/sweep_" + std::to_string(i);
        plan.push_back(s);
    }
    return plan;
}

std::vector<RunResult> run_sweep(const RunConfig& base, int n_samples, const SweepRanges& ranges,
                                 int workers) {
    const std::vector<SweepSample> plan = plan_sweep(base, n_samples, ranges);
    fs::create_directories(base.out_dir);
    {
        std::ofstream mf(base.out_dir + "/sweep_manifest.jsonl");
        for (size_t i = 0; i < plan.size(); ++i) {
            mf << json{{"index", i},
                       {"max_lr", plan[i].max_lr},
                       {"warmup_steps", plan[i].warmup_steps},
                       {"seed", plan[i].seed},
                       {"out_dir", plan[i].out_dir}}
                      .dump()
               << "\n";
        }
    }
    std::vector<RunResult> results(plan.size());
    std::vector<std::string> errors(plan.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= plan.size()) break;
            RunConfig cfg = base;
            cfg.lr.max_lr = plan[i].max_lr;
            cfg.lr.warmup_steps = plan[i].warmup_steps;
            cfg.seed = plan[i].seed;
            cfg.out_dir = plan[i].out_dir;
            try {
                results[i] = run_train(cfg);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_workers = std::max(1, workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    for (size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) {
            throw NumericError("sweep run " + std::to_string(i) + " failed: " + errors[i]);
        }
    }
    return results;
}

}  // namespace iclab

// Python bindings for the lab's main operations: registries, episode
// generation, models, metrics, and the training harness.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iclab/distcheck.hpp"
#include "iclab/errors.hpp"
#include "iclab/harness.hpp"
#include "iclab/metrics.hpp"
#include "iclab/models.hpp"
#include "iclab/plots.hpp"
#include "iclab/seqgen.hpp"

namespace py = pybind11;
using namespace iclab;

namespace {

py::array_t<float> image_to_array(const Image& im) {
    py::array_t<float> arr({im.h, im.w});
    std::copy(im.pix.begin(), im.pix.end(), arr.mutable_data());
    return arr;
}

py::array_t<float> episode_images(const Episode& ep) {
    const int n = static_cast<int>(ep.images.size());
    const int h = ep.images.empty() ? 0 : ep.images[0].h;
    const int w = ep.images.empty() ? 0 : ep.images[0].w;
    py::array_t<float> arr({n, h, w});
    float* dst = arr.mutable_data();
    for (const Image& im : ep.images) {
        dst = std::copy(im.pix.begin(), im.pix.end(), dst);
    }
    return arr;
}

// Stateful episode source: a generator plus its own rng stream.
struct PyGenerator {
    DistributionConfig cfg;
    ClassRegistry registry;
    std::unique_ptr<EpisodeGenerator> gen;
    Rng rng;

    PyGenerator(const ClassRegistry& reg, uint64_t seed, double p_bursty, double zipf_alpha,
                int label_multiplicity, int context_pairs, int bursty_shots, int eval_shots,
                int eval_ways, const std::string& policy, double noise_sigma)
        : registry(reg), rng(Rng::stream(seed, "py-episodes")) {
        cfg.p_bursty = p_bursty;
        cfg.zipf_alpha = zipf_alpha;
        cfg.label_multiplicity = label_multiplicity;
        cfg.context_pairs = context_pairs;
        cfg.bursty_shots = bursty_shots;
        cfg.eval_shots = eval_shots;
        cfg.eval_ways = eval_ways;
        cfg.exemplar_policy = ExemplarPolicy::parse(policy, noise_sigma);
        gen = std::make_unique<EpisodeGenerator>(cfg, registry, seed);
    }
};

ModelConfig model_config_from_kwargs(const std::string& kind, int label_count, int image_size,
                                     int dim, int heads, int layers,
                                     const std::vector<int>& embedder_channels,
                                     int embedder_blocks, int context_pairs,
                                     int recurrent_hidden) {
    ModelConfig mc;
    mc.kind = parse_backbone(kind);
    mc.embedder.blocks_per_group = embedder_blocks;
    mc.embedder.channels = embedder_channels;
    mc.embedder.out_dim = dim;
    mc.embedder.image_h = image_size;
    mc.embedder.image_w = image_size;
    mc.transformer.layers = layers;
    mc.transformer.dim = dim;
    mc.transformer.heads = heads;
    mc.recurrent.layers = layers;
    mc.recurrent.hidden_dim = recurrent_hidden > 0 ? recurrent_hidden : dim;
    mc.label_count = label_count;
    mc.context_pairs = context_pairs;
    return mc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "episodic image-label sequence lab";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
    py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);

    m.def("zipf_weights", &zipf_weights, py::arg("n"), py::arg("alpha"),
          "Normalized rank weights proportional to 1/rank^alpha.");
    m.def("fit_zipf_exponent", &fit_zipf_exponent, py::arg("counts_by_rank"),
          "Count-weighted log-log slope of a rank-frequency table.");
    m.def(
        "chi_square_marginal",
        [](const std::vector<int64_t>& counts, const std::vector<double>& weights) {
            return chi_square_marginal(counts, weights);
        },
        py::arg("counts"), py::arg("weights"),
        "Goodness-of-fit p-value with automatic tail-bin merging.");
    m.def(
        "lr_at",
        [](int64_t step, double max_lr, int64_t warmup) {
            return lr_at(step, LrSchedule{max_lr, warmup});
        },
        py::arg("step"), py::arg("max_lr") = 3e-4, py::arg("warmup_steps") = 4000,
        "Linear warmup then inverse-sqrt decay.");

    py::class_<ClassRegistry>(m, "Registry")
        .def_static(
            "synthetic",
            [](int n, uint64_t seed, int h, int w, int exemplars, double holdout) {
                return synth_classes(n, seed, h, w, {exemplars, holdout});
            },
            py::arg("n"), py::arg("seed"), py::arg("h") = 12, py::arg("w") = 12,
            py::arg("exemplars_per_class") = 20, py::arg("holdout_fraction") = 0.1)
        .def_static(
            "omniglot",
            [](const std::string& root, int h, int w, double holdout, uint64_t split_seed) {
                return load_omniglot(root, {h, w, holdout, split_seed});
            },
            py::arg("root"), py::arg("h") = 28, py::arg("w") = 28,
            py::arg("holdout_fraction") = 0.1, py::arg("split_seed") = 0)
        .def_static("load", &load_registry, py::arg("path"))
        .def("save", [](const ClassRegistry& reg, const std::string& path) {
            save_registry(reg, path);
        })
        .def("augment_x8", [](const ClassRegistry& reg) { return augment_x8(reg); })
        .def_property_readonly("n_classes", &ClassRegistry::size)
        .def_property_readonly("image_h", [](const ClassRegistry& r) { return r.image_h; })
        .def_property_readonly("image_w", [](const ClassRegistry& r) { return r.image_w; })
        .def_property_readonly("holdout_ids",
                               [](const ClassRegistry& r) { return r.holdout_list(); })
        .def_property_readonly("training_ids",
                               [](const ClassRegistry& r) { return r.training_ids(); })
        .def(
            "exemplar",
            [](const ClassRegistry& r, int class_id, int idx) {
                const auto& ex = r.by_id(class_id).exemplars;
                if (idx < 0 || idx >= static_cast<int>(ex.size())) {
                    throw ConfigError("exemplar index out of range");
                }
                return image_to_array(ex[static_cast<size_t>(idx)]);
            },
            py::arg("class_id"), py::arg("index") = 0);

    py::class_<Episode>(m, "Episode")
        .def_property_readonly("images", &episode_images)
        .def_property_readonly("labels", [](const Episode& e) { return e.labels; })
        .def_property_readonly("target", [](const Episode& e) { return e.target; })
        .def_property_readonly("class_ids", [](const Episode& e) { return e.class_ids; })
        .def_property_readonly("query_rank", [](const Episode& e) { return e.query_rank; })
        .def_property_readonly("kind",
                               [](const Episode& e) { return episode_kind_name(e.kind); })
        .def_property_readonly("query_support", &Episode::query_support)
        .def("debug_dump", &episode_debug_dump);

    py::class_<PyGenerator>(m, "Generator")
        .def(py::init<const ClassRegistry&, uint64_t, double, double, int, int, int, int, int,
                      const std::string&, double>(),
             py::arg("registry"), py::arg("seed"), py::arg("p_bursty") = 0.9,
             py::arg("zipf_alpha") = 0.0, py::arg("label_multiplicity") = 1,
             py::arg("context_pairs") = 8, py::arg("bursty_shots") = 3, py::arg("eval_shots") = 4,
             py::arg("eval_ways") = 2, py::arg("exemplar_policy") = "single",
             py::arg("noise_sigma") = 0.0)
        .def("training_episode",
             [](PyGenerator& g) { return g.gen->make_training_episode(g.rng); })
        .def("bursty", [](PyGenerator& g) { return g.gen->make_bursty(g.rng); })
        .def("nonbursty", [](PyGenerator& g) { return g.gen->make_nonbursty(g.rng); })
        .def(
            "fewshot_eval",
            [](PyGenerator& g, const std::string& pool) {
                return g.gen->make_fewshot_eval(
                    g.rng, pool == "holdout" ? FewshotPool::holdout : FewshotPool::trained);
            },
            py::arg("pool") = "holdout")
        .def(
            "inweights_eval",
            [](PyGenerator& g, const std::string& pool) {
                QueryPool q = pool == "common10" ? QueryPool::common10
                              : pool == "rare"   ? QueryPool::rare
                                                 : QueryPool::all;
                return g.gen->make_inweights_eval(g.rng, q);
            },
            py::arg("pool") = "all")
        .def_property_readonly("label_count",
                               [](const PyGenerator& g) { return g.gen->label_count(); })
        .def("rank_of",
             [](const PyGenerator& g, int class_id) { return g.gen->sampler().rank_of(class_id); })
        .def("labels_of", [](const PyGenerator& g, int class_id) {
            return g.gen->labels().labels_of(class_id);
        });

    py::class_<Model>(m, "Model")
        .def(py::init([](const std::string& kind, int label_count, int image_size, int dim,
                         int heads, int layers, const std::vector<int>& embedder_channels,
                         int embedder_blocks, int context_pairs, int recurrent_hidden,
                         uint64_t seed) {
                 return Model(model_config_from_kwargs(kind, label_count, image_size, dim, heads,
                                                       layers, embedder_channels, embedder_blocks,
                                                       context_pairs, recurrent_hidden),
                              seed);
             }),
             py::arg("kind"), py::arg("label_count"), py::arg("image_size"), py::arg("dim") = 64,
             py::arg("heads") = 8, py::arg("layers") = 2,
             py::arg("embedder_channels") = std::vector<int>{8, 16},
             py::arg("embedder_blocks") = 1, py::arg("context_pairs") = 8,
             py::arg("recurrent_hidden") = 0, py::arg("seed") = 0)
        .def(
            "query_logits",
            [](const Model& model, const std::vector<Episode>& eps) {
                Tensor logits = model.query_logits_eval(eps);
                py::array_t<double> arr({logits.dim(0), logits.dim(1)});
                std::copy(logits.data.begin(), logits.data.end(), arr.mutable_data());
                return arr;
            },
            py::arg("episodes"))
        .def("count_params", [](const Model& model) {
            auto b = model.count_params();
            py::dict d;
            d["image_embedder"] = b.image_embedder;
            d["label_embedder"] = b.label_embedder;
            d["backbone"] = b.backbone;
            d["head"] = b.head;
            d["total"] = b.total;
            return d;
        });

    m.def(
        "restricted_two_way_accuracy",
        [](const std::vector<Episode>& eps, py::array_t<double> logits) {
            Tensor t = Tensor::from({logits.shape(0), logits.shape(1)},
                                    std::vector<double>(logits.data(),
                                                        logits.data() + logits.size()));
            auto recs = make_records(eps, t);
            return restricted_two_way_accuracy(recs).mean;
        },
        py::arg("episodes"), py::arg("logits"));
    m.def(
        "full_multiclass_accuracy",
        [](const std::vector<Episode>& eps, py::array_t<double> logits) {
            Tensor t = Tensor::from({logits.shape(0), logits.shape(1)},
                                    std::vector<double>(logits.data(),
                                                        logits.data() + logits.size()));
            auto recs = make_records(eps, t);
            return full_multiclass_accuracy(recs).mean;
        },
        py::arg("episodes"), py::arg("logits"));

    m.def(
        "run_train",
        [](const std::string& config_json, const std::string& resume) {
            RunConfig cfg = RunConfig::from_json(config_json);
            RunResult res = run_train(cfg, resume);
            py::dict d;
            d["out_dir"] = res.out_dir;
            d["metrics_path"] = res.metrics_path;
            d["checkpoint_path"] = res.checkpoint_path;
            d["final_step"] = res.final_step;
            return d;
        },
        py::arg("config_json"), py::arg("resume") = "",
        "Run a full training job from a JSON config string.");
    m.def(
        "evaluate_checkpoint",
        [](const std::string& config_json, const std::string& ckpt, int episodes, uint64_t seed) {
            RunConfig cfg = RunConfig::from_json(config_json);
            EvalReport rep = evaluate_checkpoint(cfg, ckpt, episodes, seed);
            py::dict d;
            for (const auto& s : rep.summaries) {
                d[py::str(s.metric)] = s.mean;
            }
            return d;
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("episodes") = 256,
        py::arg("eval_seed") = 1);
    m.def(
        "validate_stream",
        [](PyGenerator& g, int64_t episodes, uint64_t seed) {
            ValidationReport rep = validate_stream(*g.gen, episodes, seed);
            py::dict d;
            d["episodes"] = rep.episodes;
            d["burstiness"] = rep.burstiness;
            d["chi_square_p"] = rep.chi_square_p;
            d["fitted_alpha"] = rep.fitted_alpha;
            d["holdout_hits"] = rep.holdout_hits;
            d["pass"] = rep.pass;
            return d;
        },
        py::arg("generator"), py::arg("episodes") = 10000, py::arg("seed") = 0);
    m.def(
        "emit_plots",
        [](const std::vector<std::string>& logs, const std::string& out_dir, double window) {
            PlotOutputs out = emit_plots(logs, out_dir, window);
            return out.files;
        },
        py::arg("metrics_paths"), py::arg("out_dir"), py::arg("final_window_fraction") = 0.2);

    m.attr("__version__") = "0.1.0";
}

// Acceptance suite: one PASS/FAIL line per criterion, selected by name.
//
//   c1_generators      episode-stream invariants at volume
//   c2_distribution    marginal fidelity and exponent recovery
//   c3_numerics        finite-difference gradient checks, op and end-to-end
//   c4_overfit         2-layer transformer memorizes 8 fixed episodes
//   c5_burstiness      bursty training -> few-shot accuracy; iid -> chance
//   c6_zipf            skewed marginal: in-weights + in-context coexistence
//   c7_architecture    matched LSTM never acquires few-shot accuracy
//   c8_metric_oracles  metric implementations on constructed logits
//   c9_reproducibility bit-identical logs across reruns and resume
//
// Long criteria (c5-c7) train real models; runs execute two at a time and
// their artifacts land under --work-dir for inspection.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iclab/checkpoint.hpp"
#include "iclab/distcheck.hpp"
#include "iclab/errors.hpp"
#include "iclab/harness.hpp"
#include "iclab/metrics.hpp"
#include "iclab/metrics_log.hpp"
#include "iclab/models.hpp"
#include "iclab/optim.hpp"
#include "iclab/plots.hpp"

namespace fs = std::filesystem;
using namespace iclab;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;
std::string g_work_dir = "acceptance_work";

void report(const std::string& name, bool pass, const std::string& detail, double seconds) {
    g_results.push_back({name, pass, detail, seconds});
    std::printf("[%s] %-18s %s (%.1fs)\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str(),
                seconds);
    std::fflush(stdout);
}

template <typename Fn>
void run_criterion(const std::string& name, Fn&& fn) {
    const auto t0 = Clock::now();
    bool pass = false;
    std::string detail;
    try {
        std::tie(pass, detail) = fn();
    } catch (const std::exception& e) {
        pass = false;
        detail = std::string("exception: ") + e.what();
    }
    report(name, pass, detail, std::chrono::duration<double>(Clock::now() - t0).count());
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

// ------------------------------------------------------------------ c1

std::pair<bool, std::string> c1_generators() {
    ClassRegistry reg = synth_classes(1600, 101, 12, 12, {20, 0.1});
    int64_t violations = 0;
    std::string first_violation;
    auto violate = [&](const std::string& what) {
        ++violations;
        if (first_violation.empty()) first_violation = what;
    };

    struct Setup {
        const char* name;
        DistributionConfig cfg;
    };
    std::vector<Setup> setups;
    {
        DistributionConfig base;
        base.p_bursty = 0.9;
        setups.push_back({"default", base});
        DistributionConfig zipf = base;
        zipf.zipf_alpha = 1.0;
        setups.push_back({"zipf1", zipf});
        DistributionConfig multi = base;
        multi.label_multiplicity = 2;
        setups.push_back({"multiplicity2", multi});
        DistributionConfig all_bursty = base;
        all_bursty.p_bursty = 1.0;
        setups.push_back({"bursty1", all_bursty});
    }

    const int64_t per_setup = 100000 / static_cast<int64_t>(setups.size());
    int64_t total = 0;
    for (const Setup& setup : setups) {
        EpisodeGenerator gen(setup.cfg, reg, 103);
        Rng rng = Rng::stream(107, setup.name);
        for (int64_t i = 0; i < per_setup; ++i) {
            // training, few-shot, and in-weights episodes in one sweep
            Episode ep = gen.make_training_episode(rng);
            ++total;
            if (static_cast<int>(ep.images.size()) != 9 || ep.labels.size() != 8 ||
                ep.class_ids.size() != 9) {
                violate("17-token layout");
            }
            for (int cls : ep.class_ids) {
                if (reg.is_holdout(cls)) violate("holdout in training episode");
            }
            // label consistency within the episode
            std::map<int, int> label_of;
            for (size_t p = 0; p < ep.labels.size(); ++p) {
                auto [it, fresh] = label_of.emplace(ep.class_ids[p], ep.labels[p]);
                if (!fresh && it->second != ep.labels[p]) violate("inconsistent episode label");
            }
            if (ep.kind == EpisodeKind::bursty) {
                std::map<int, int> hist;
                for (size_t p = 0; p + 1 < ep.class_ids.size(); ++p) hist[ep.class_ids[p]]++;
                int threes = 0, singles = 0;
                for (auto& [cls, n] : hist) {
                    if (n == 3) ++threes;
                    else if (n == 1) ++singles;
                    else violate("bursty context multiset");
                }
                if (threes != 2 || singles != 2) violate("bursty context multiset");
                if (hist[ep.class_ids.back()] != 3) violate("bursty query support");
            }
            if (i % 10 == 0) {
                Episode fs = gen.make_fewshot_eval(rng, FewshotPool::holdout);
                ++total;
                std::multiset<int> labs(fs.labels.begin(), fs.labels.end());
                if (labs.count(0) != 4 || labs.count(1) != 4) violate("fewshot label multiset");
                if (fs.query_support() != 4) violate("fewshot query support");
                if (fs.target != 0 && fs.target != 1) violate("fewshot target");
                Episode iw = gen.make_inweights_eval(rng);
                ++total;
                if (iw.query_support() != 0) violate("inweights query support");
                std::set<int> uniq(iw.class_ids.begin(), iw.class_ids.end());
                if (uniq.size() != 9) violate("inweights distinct classes");
            }
        }
    }
    const bool pass = violations == 0;
    return {pass, std::to_string(total) + " episodes, " + std::to_string(violations) +
                      " violations" +
                      (first_violation.empty() ? "" : " (first: " + first_violation + ")")};
}

// ------------------------------------------------------------------ c2

std::pair<bool, std::string> c2_distribution() {
    std::ostringstream detail;
    bool pass = true;
    const int n = 1000;
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
    for (double alpha : {0.0, 1.0, 2.0, 3.0}) {
        ZipfSampler sampler(ids, alpha, 211);
        Rng rng = Rng::stream(223, "c2", static_cast<uint64_t>(alpha * 10));
        std::vector<int64_t> counts(static_cast<size_t>(n), 0);
        for (int64_t i = 0; i < 1000000; ++i) {
            counts[static_cast<size_t>(sampler.rank_of(sampler.sample(rng)) - 1)]++;
        }
        const double p = chi_square_marginal(counts, sampler.weights_by_rank());
        const double fit = fit_zipf_exponent(counts);
        const double tol = alpha == 3.0 ? 0.1 : 0.05;
        const bool ok = p > 0.001 && std::abs(fit - alpha) <= tol;
        pass = pass && ok;
        detail << "a=" << alpha << ": p=" << fmt(p) << " fit=" << fmt(fit) << (ok ? " " : "! ");
    }
    // top-3 mass at n=12800, alpha=3
    auto w = zipf_weights(12800, 3.0);
    const double top3 = w[0] + w[1] + w[2];
    const bool top3_ok = std::abs(top3 - 0.97) <= 0.005;
    pass = pass && top3_ok;
    detail << "top3@12800=" << fmt(top3) << (top3_ok ? "" : "!");
    return {pass, detail.str()};
}

// ------------------------------------------------------------------ c3

// Central differences against the tape's gradients; probes every op through
// small dedicated graphs, then a 2-layer end-to-end model of each backbone.
double fd_probe(const std::function<double()>& eval, double* slot, double analytic) {
    const double x0 = *slot;
    const double h = 1e-5 * std::max(1.0, std::abs(x0));
    *slot = x0 + h;
    const double fp = eval();
    *slot = x0 - h;
    const double fm = eval();
    *slot = x0;
    const double numeric = (fp - fm) / (2 * h);
    if (std::abs(analytic - numeric) < 1e-8) {
        return 0.0;
    }
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

std::pair<bool, std::string> c3_numerics() {
    namespace op = iclab::ops;
    double worst = 0.0;
    std::string worst_site;
    auto note = [&](const std::string& site, double rel) {
        if (rel > worst) {
            worst = rel;
            worst_site = site;
        }
    };

    // per-op graphs: scalarize through fixed weights
    {
        Rng rng(301);
        auto trand = [&](std::vector<int64_t> shape, double lo = -1.0, double hi = 1.0) {
            Tensor t(std::move(shape));
            for (double& v : t.data) v = rng.uniform(lo, hi);
            return t;
        };
        struct OpCase {
            std::string name;
            std::vector<Tensor> inputs;
            std::function<Var(Tape&, std::vector<Var>&)> build;
        };
        Tensor mask({4, 4});
        for (int64_t i = 0; i < 4; ++i) {
            for (int64_t j = 0; j <= i; ++j) mask.at(i, j) = 1.0;
        }
        std::vector<int64_t> gather_ids{3, 0, 0, 2};
        std::vector<int64_t> ce_targets{1, 4, 0};
        std::vector<OpCase> cases;
        auto scalarized = [&](const char* name, std::vector<Tensor> inputs, auto make) {
            Tensor probe_shape_src;  // computed on first build below
            // freeze scalarizing weights by building the op once
            Tape t0;
            std::vector<Var> l0;
            for (auto& in : inputs) l0.push_back(t0.constant(in));
            Var out0 = make(t0, l0);
            Tensor w = trand(out0.val().shape, 0.5, 1.5);
            (void)probe_shape_src;
            cases.push_back(
                {name, std::move(inputs), [make, w](Tape& t, std::vector<Var>& l) {
                     return op::sum_all(op::mul(make(t, l), t.constant(w)));
                 }});
        };
        scalarized("matmul", {trand({3, 4}), trand({4, 5})},
                   [](Tape&, std::vector<Var>& l) { return op::matmul(l[0], l[1]); });
        scalarized("bmm", {trand({2, 3, 4}), trand({2, 4, 3})},
                   [](Tape&, std::vector<Var>& l) { return op::bmm(l[0], l[1]); });
        scalarized("bmm_nt", {trand({2, 3, 4}), trand({2, 5, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::bmm_nt(l[0], l[1]); });
        scalarized("add", {trand({3, 4}), trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::add(l[0], l[1]); });
        scalarized("add_bias", {trand({3, 4}), trand({4})},
                   [](Tape&, std::vector<Var>& l) { return op::add(l[0], l[1]); });
        scalarized("sub", {trand({3, 4}), trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::sub(l[0], l[1]); });
        scalarized("mul", {trand({3, 4}), trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::mul(l[0], l[1]); });
        scalarized("scale", {trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::scale(l[0], -1.3); });
        scalarized("relu", {trand({3, 4}, 0.2, 1.0)},
                   [](Tape&, std::vector<Var>& l) { return op::relu(l[0]); });
        scalarized("gelu", {trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::gelu(l[0]); });
        scalarized("sigmoid", {trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::sigmoid(l[0]); });
        scalarized("tanh", {trand({3, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::tanh(l[0]); });
        scalarized("softmax", {trand({4, 4}, -2.0, 2.0)},
                   [](Tape&, std::vector<Var>& l) { return op::softmax(l[0]); });
        scalarized("softmax_masked", {trand({4, 4}, -2.0, 2.0)},
                   [mask](Tape&, std::vector<Var>& l) { return op::softmax(l[0], mask); });
        scalarized("layer_norm", {trand({3, 6}), trand({6}, 0.5, 1.5), trand({6})},
                   [](Tape&, std::vector<Var>& l) { return op::layer_norm(l[0], l[1], l[2]); });
        scalarized("gather_rows", {trand({5, 3})},
                   [gather_ids](Tape&, std::vector<Var>& l) {
                       return op::gather_rows(l[0], gather_ids);
                   });
        scalarized("concat_slice", {trand({2, 3, 4}), trand({2, 2, 4})},
                   [](Tape&, std::vector<Var>& l) {
                       return op::slice(op::concat({l[0], l[1]}, 1), 1, 1, 4);
                   });
        scalarized("transpose", {trand({3, 5})},
                   [](Tape&, std::vector<Var>& l) { return op::transpose(l[0]); });
        scalarized("permute_reshape", {trand({2, 3, 4})},
                   [](Tape&, std::vector<Var>& l) {
                       return op::reshape(op::permute(l[0], {2, 0, 1}), {4, 6});
                   });
        scalarized("conv2d_s1", {trand({2, 2, 5, 5}), trand({3, 2, 3, 3}, -0.5, 0.5), trand({3})},
                   [](Tape&, std::vector<Var>& l) { return op::conv2d(l[0], l[1], l[2], 1, 1); });
        scalarized("conv2d_s2", {trand({2, 2, 5, 5}), trand({3, 2, 3, 3}, -0.5, 0.5), trand({3})},
                   [](Tape&, std::vector<Var>& l) { return op::conv2d(l[0], l[1], l[2], 2, 1); });
        scalarized("mean_pool", {trand({2, 3, 4, 4})},
                   [](Tape&, std::vector<Var>& l) { return op::mean_pool_hw(l[0]); });
        cases.push_back({"cross_entropy",
                         {trand({3, 6}, -2.0, 2.0)},
                         [ce_targets](Tape&, std::vector<Var>& l) {
                             return op::cross_entropy_with_logits(l[0], ce_targets);
                         }});
        cases.push_back({"mean_all", {trand({3, 4})}, [](Tape&, std::vector<Var>& l) {
                             return op::mean_all(op::gelu(l[0]));
                         }});

        for (auto& oc : cases) {
            // analytic
            Tape tape;
            std::vector<Var> leaves;
            for (auto& in : oc.inputs) {
                Tensor c = in;
                c.requires_grad = true;
                leaves.push_back(tape.leaf(std::move(c)));
            }
            Var lossv = oc.build(tape, leaves);
            tape.backward(lossv);
            std::vector<Tensor> grads;
            for (Var& v : leaves) grads.push_back(tape.grad_of(v));
            auto eval = [&]() {
                Tape t2;
                std::vector<Var> l2;
                for (auto& in : oc.inputs) l2.push_back(t2.constant(in));
                return oc.build(t2, l2).val().data[0];
            };
            for (size_t k = 0; k < oc.inputs.size(); ++k) {
                for (int64_t j = 0; j < oc.inputs[k].numel(); ++j) {
                    note(oc.name,
                         fd_probe(eval, &oc.inputs[k].data[static_cast<size_t>(j)],
                                  grads[k].data[static_cast<size_t>(j)]));
                }
            }
        }
    }

    // end-to-end 2-layer models
    for (BackboneKind kind :
         {BackboneKind::transformer, BackboneKind::lstm, BackboneKind::vanilla_rnn}) {
        ClassRegistry reg = synth_classes(24, 311, 8, 8, {2, 0.25});
        DistributionConfig dist;
        EpisodeGenerator gen(dist, reg, 313);
        ModelConfig mc;
        mc.kind = kind;
        mc.embedder.blocks_per_group = 1;
        mc.embedder.channels = {4, 8};
        mc.embedder.out_dim = 8;
        mc.embedder.image_h = 8;
        mc.embedder.image_w = 8;
        mc.transformer.layers = 2;
        mc.transformer.dim = 8;
        mc.transformer.heads = 2;
        mc.recurrent.layers = 2;
        mc.recurrent.hidden_dim = 8;
        mc.label_count = gen.label_count();
        Model model(mc, 317);
        Rng erng = Rng::stream(331, "episodes");
        std::vector<Episode> eps;
        std::vector<int64_t> targets;
        for (int i = 0; i < 2; ++i) {
            eps.push_back(gen.make_training_episode(erng));
            targets.push_back(eps.back().target);
        }
        Tape tape;
        auto pv = tape.attach(model.params());
        GradMap grads = tape.backward(loss(model.query_logits(tape, eps, pv), targets));
        auto eval = [&]() {
            Tape t2;
            std::map<std::string, Var> pv2;
            for (const auto& [n2, t] : model.params()) pv2.emplace(n2, t2.constant(t));
            return loss(model.query_logits(t2, eps, pv2), targets).val().data[0];
        };
        Rng sel = Rng::stream(337, backbone_name(kind));
        for (auto& [name, tensor] : model.params()) {
            for (int k = 0; k < 3; ++k) {
                const int64_t j = sel.below(tensor.numel());
                note(std::string("e2e/") + backbone_name(kind) + "/" + name,
                     fd_probe(eval, &tensor.data[static_cast<size_t>(j)],
                              grads.at(name).data[static_cast<size_t>(j)]));
            }
        }
    }

    const bool pass = worst < 1e-5;
    return {pass, "max rel err " + fmt(worst, 9) + " at " + worst_site};
}

// ------------------------------------------------------------------ c4

std::pair<bool, std::string> c4_overfit() {
    ClassRegistry reg = synth_classes(64, 401, 12, 12, {20, 0.1});
    DistributionConfig dist;
    dist.p_bursty = 0.9;
    EpisodeGenerator gen(dist, reg, 403);
    ModelConfig mc;
    mc.embedder.blocks_per_group = 1;
    mc.embedder.channels = {8, 16};
    mc.embedder.out_dim = 64;
    mc.embedder.image_h = 12;
    mc.embedder.image_w = 12;
    mc.transformer.layers = 2;
    mc.transformer.dim = 64;
    mc.transformer.heads = 8;
    mc.label_count = gen.label_count();
    Model model(mc, 409);

    Rng erng = Rng::stream(419, "fixed-episodes");
    std::vector<Episode> eps;
    std::vector<int64_t> targets;
    for (int i = 0; i < 8; ++i) {
        eps.push_back(gen.make_training_episode(erng));
        targets.push_back(eps.back().target);
    }
    AdamState adam;
    LrSchedule sched{3e-4, 4000};
    double best_acc = 0.0;
    int64_t reached_at = -1;
    for (int64_t step = 1; step <= 2000; ++step) {
        Tape tape;
        auto pv = tape.attach(model.params());
        Var logits = model.query_logits(tape, eps, pv);
        // training accuracy on the 8 fixed episodes
        {
            const Tensor& lv = logits.val();
            int correct = 0;
            for (int i = 0; i < 8; ++i) {
                const double* row = lv.data.data() + static_cast<int64_t>(i) * lv.dim(1);
                int64_t am = 0;
                for (int64_t j = 1; j < lv.dim(1); ++j) {
                    if (row[j] > row[am]) am = j;
                }
                if (am == targets[static_cast<size_t>(i)]) ++correct;
            }
            const double acc = correct / 8.0;
            best_acc = std::max(best_acc, acc);
            if (acc >= 0.99 && reached_at < 0) {
                reached_at = step;
                break;
            }
        }
        GradMap grads = tape.backward(loss(logits, targets));
        adam_step(model.params(), grads, adam, lr_at(step, sched));
    }
    const bool pass = reached_at > 0;
    return {pass, pass ? "100% at step " + std::to_string(reached_at)
                       : "best accuracy " + fmt(best_acc) + " within 2000 steps"};
}

// ------------------------------------------------------------------ c5-c7 shared machinery

RunConfig desk_run(const std::string& out, uint64_t seed) {
    RunConfig cfg;
    cfg.synthetic_classes = 1600;
    cfg.image_size = 12;
    cfg.embedder_blocks = 1;
    cfg.embedder_channels = {8, 16};
    cfg.model_dim = 64;
    cfg.heads = 8;
    cfg.layers = 2;
    cfg.batch_size = 32;
    cfg.lr = {3e-4, 1000};
    cfg.eval_every = 500;
    cfg.eval_episodes = 256;
    cfg.seed = seed;
    cfg.out_dir = out;
    return cfg;
}

// Mean of a metric over the final 20% of steps.
double final_window_mean(const std::string& metrics_path, const std::string& metric) {
    ParsedLog log = read_metrics_log(metrics_path);
    int64_t max_step = 0;
    for (const MetricsRow& r : log.rows) max_step = std::max(max_step, r.step);
    const int64_t start = max_step - max_step / 5;
    double sum = 0.0;
    int64_t n = 0;
    for (const MetricsRow& r : log.rows) {
        if (r.metric == metric && r.step >= start) {
            sum += r.value;
            ++n;
        }
    }
    if (n == 0) {
        throw ConfigError("no rows for metric " + metric + " in " + metrics_path);
    }
    return sum / static_cast<double>(n);
}

// Runs a batch of configs, two at a time (each run is single-threaded).
std::vector<RunResult> run_parallel(std::vector<RunConfig> cfgs, int workers = 2) {
    std::vector<RunResult> results(cfgs.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= cfgs.size()) break;
            results[i] = run_train(cfgs[i]);
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

int64_t g_train_steps = 14000;

// ------------------------------------------------------------------ c5

std::pair<bool, std::string> c5_burstiness() {
    std::vector<RunConfig> cfgs;
    for (uint64_t seed : {1, 2, 3}) {
        for (double p : {1.0, 0.0}) {
            RunConfig cfg = desk_run(g_work_dir + "/c5_p" + fmt(p, 0) + "_s" +
                                         std::to_string(seed),
                                     seed);
            cfg.dist.p_bursty = p;
            cfg.total_steps = g_train_steps;
            cfgs.push_back(cfg);
        }
    }
    auto results = run_parallel(std::move(cfgs));
    std::ostringstream detail;
    bool pass = true;
    for (size_t i = 0; i < results.size(); ++i) {
        const double acc =
            final_window_mean(results[i].metrics_path, "fewshot_holdout/restricted");
        const bool bursty = results[i].out_dir.find("_p1_") != std::string::npos;
        const bool ok = bursty ? acc > 0.75 : (acc >= 0.40 && acc <= 0.60);
        pass = pass && ok;
        detail << (bursty ? "p1:" : "p0:") << fmt(acc) << (ok ? " " : "! ");
    }
    return {pass, detail.str()};
}

// ------------------------------------------------------------------ c6

std::pair<bool, std::string> c6_zipf() {
    std::vector<RunConfig> cfgs;
    for (uint64_t seed : {1, 2, 3}) {
        for (double alpha : {0.0, 1.0}) {
            RunConfig cfg = desk_run(g_work_dir + "/c6_a" + fmt(alpha, 0) + "_s" +
                                         std::to_string(seed),
                                     seed);
            cfg.dist.p_bursty = 0.9;
            cfg.dist.zipf_alpha = alpha;
            cfg.total_steps = g_train_steps;
            cfgs.push_back(cfg);
        }
    }
    auto results = run_parallel(std::move(cfgs));
    std::ostringstream detail;
    bool pass = true;
    for (size_t i = 0; i < results.size(); ++i) {
        const bool skewed = results[i].out_dir.find("_a1_") != std::string::npos;
        if (!skewed) {
            const double fsl =
                final_window_mean(results[i].metrics_path, "fewshot_holdout/restricted");
            const double iw = final_window_mean(results[i].metrics_path,
                                                "inweights_all/multiclass");
            const double chance = 1.0 / 1440.0;  // 1600 classes, 10% holdout
            const bool ok = iw < 5.0 * chance && fsl > 0.75;
            pass = pass && ok;
            detail << "a0 fsl:" << fmt(fsl) << " iw:" << fmt(iw, 4) << (ok ? " " : "! ");
        } else {
            const double fsl =
                final_window_mean(results[i].metrics_path, "fewshot_holdout/restricted");
            const double common = final_window_mean(results[i].metrics_path,
                                                    "inweights_common10/multiclass");
            const bool ok = common > 0.5 && fsl > 0.6;
            pass = pass && ok;
            detail << "a1 fsl:" << fmt(fsl) << " common:" << fmt(common) << (ok ? " " : "! ");
        }
    }
    return {pass, detail.str()};
}

// ------------------------------------------------------------------ c7

std::pair<bool, std::string> c7_architecture() {
    // LSTM leg: parameter-matched, same data as c5's p_bursty=1 setup.
    std::vector<RunConfig> cfgs;
    for (uint64_t seed : {1, 2, 3}) {
        RunConfig cfg = desk_run(g_work_dir + "/c7_lstm_s" + std::to_string(seed), seed);
        cfg.model_kind = BackboneKind::lstm;
        cfg.dist.p_bursty = 1.0;
        cfg.total_steps = g_train_steps;
        cfgs.push_back(cfg);
    }
    auto results = run_parallel(std::move(cfgs));
    std::ostringstream detail;
    bool pass = true;
    for (const RunResult& r : results) {
        const double acc = final_window_mean(r.metrics_path, "fewshot_holdout/restricted");
        const bool ok = acc <= 0.55;
        pass = pass && ok;
        detail << "lstm:" << fmt(acc) << (ok ? " " : "! ");
    }
    // transformer side: reuse the c5 p_bursty=1 runs when present
    int transformer_ok = 0, transformer_total = 0;
    for (uint64_t seed : {1, 2, 3}) {
        const std::string path = g_work_dir + "/c5_p1_s" + std::to_string(seed) +
                                 "/metrics.jsonl";
        if (fs::exists(path)) {
            ++transformer_total;
            const double acc = final_window_mean(path, "fewshot_holdout/restricted");
            if (acc > 0.75) ++transformer_ok;
            detail << "tf:" << fmt(acc) << " ";
        }
    }
    if (transformer_total > 0) {
        pass = pass && transformer_ok == transformer_total;
    } else {
        detail << "(transformer side: run c5 first) ";
    }
    return {pass, detail.str()};
}

// ------------------------------------------------------------------ c8

std::pair<bool, std::string> c8_metric_oracles() {
    bool pass = true;
    std::ostringstream detail;
    auto expect = [&](const char* what, bool ok) {
        pass = pass && ok;
        if (!ok) detail << what << " failed; ";
    };

    auto fewshot = [](std::vector<double> logits, int target) {
        EvalRecord r;
        r.logits = std::move(logits);
        r.target = target;
        r.context_labels = {0, 1};
        r.kind = EpisodeKind::fewshot_eval;
        return r;
    };

    // restricted 2-way: chance 1/2 on random logits, exact tie rule
    {
        Rng rng(801);
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 10000; ++i) {
            std::vector<double> logits(1600);
            for (double& v : logits) v = rng.normal();
            recs.push_back(fewshot(std::move(logits), static_cast<int>(rng.below(2))));
        }
        const double acc = restricted_two_way_accuracy(recs).mean;
        expect("restricted chance 1/2", std::abs(acc - 0.5) < 0.015);
        std::vector<EvalRecord> ties{fewshot({1.0, 1.0}, 0)};
        expect("tie rule", restricted_two_way_accuracy(ties).mean == 0.5);
    }
    // multiclass chance 1/1600 via simulated argmax
    {
        Rng rng(809);
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 200000; ++i) {
            std::vector<double> logits(1600, 0.0);
            logits[static_cast<size_t>(rng.below(1600))] = 1.0;
            recs.push_back(fewshot(std::move(logits), static_cast<int>(rng.below(2))));
        }
        const double acc = full_multiclass_accuracy(recs).mean;
        const double chance = 1.0 / 1600.0;
        expect("multiclass chance 1/1600",
               std::abs(acc - chance) < 5 * std::sqrt(chance / 200000.0));
        // dominance inequalities on the same records
        const double restricted = restricted_two_way_accuracy(recs).mean;
        const double ctx = context_label_frequency(recs).mean;
        expect("restricted >= multiclass", restricted >= acc);
        expect("ctx-freq >= multiclass", ctx >= acc);
        expect("ctx-freq ~ 2/1600", std::abs(ctx - 2.0 / 1600.0) <
                                        5 * std::sqrt(2.0 / 1600.0 / 200000.0));
    }
    // in-weights pools on constructed memorization pattern
    {
        Rng rng(811);
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 30000; ++i) {
            const int rank = static_cast<int>(rng.below(1600)) + 1;
            EvalRecord r;
            r.kind = EpisodeKind::inweights_eval;
            r.query_rank = rank;
            r.target = rank - 1;
            r.logits.assign(1600, 0.0);
            if (rank <= 10) {
                r.logits[static_cast<size_t>(r.target)] = 4.0;
            } else {
                r.logits[static_cast<size_t>(rng.below(1600))] = 4.0;
            }
            recs.push_back(std::move(r));
        }
        expect("common10 memorized", inweights_accuracy(recs, QueryPool::common10).mean == 1.0);
        expect("rare at chance",
               inweights_accuracy(recs, QueryPool::rare).mean < 5.0 / 1600.0 + 0.01);
    }
    return {pass, pass ? "all metric oracles hold" : detail.str()};
}

// ------------------------------------------------------------------ c9

std::pair<bool, std::string> c9_reproducibility() {
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    RunConfig base = desk_run(g_work_dir + "/c9_a", 42);
    base.synthetic_classes = 60;
    base.image_size = 8;
    base.embedder_channels = {4, 8};
    base.model_dim = 16;
    base.heads = 4;
    base.layers = 1;
    base.total_steps = 40;
    base.batch_size = 8;
    base.eval_every = 10;
    base.eval_episodes = 16;

    RunConfig again = base;
    again.out_dir = g_work_dir + "/c9_b";
    RunResult ra = run_train(base);
    RunResult rb = run_train(again);
    const bool rerun_ok = slurp(ra.metrics_path) == slurp(rb.metrics_path) &&
                          slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path);

    // resume mid-run (off the eval grid) and compare the full log byte-wise
    RunConfig interrupted = base;
    interrupted.out_dir = g_work_dir + "/c9_c";
    interrupted.total_steps = 23;
    RunResult r1 = run_train(interrupted);
    interrupted.total_steps = 40;
    RunResult r2 = run_train(interrupted, r1.checkpoint_path);
    const bool resume_ok = slurp(ra.metrics_path) == slurp(r2.metrics_path) &&
                           slurp(ra.checkpoint_path) == slurp(r2.checkpoint_path);

    const bool pass = rerun_ok && resume_ok;
    return {pass, std::string("rerun ") + (rerun_ok ? "identical" : "DIFFERS") + ", resume " +
                      (resume_ok ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<std::string> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--work-dir" && i + 1 < argc) {
            g_work_dir = argv[++i];
        } else if (arg == "--train-steps" && i + 1 < argc) {
            g_train_steps = std::atoll(argv[++i]);
        } else if (arg == "--help") {
            std::printf(
                "usage: acceptance [--work-dir DIR] [--train-steps N] [criteria...]\n"
                "criteria: c1_generators c2_distribution c3_numerics c4_overfit c5_burstiness\n"
                "          c6_zipf c7_architecture c8_metric_oracles c9_reproducibility\n");
            return 0;
        } else {
            selected.insert(arg);
        }
    }
    fs::create_directories(g_work_dir);
    auto want = [&](const std::string& name) {
        return selected.empty() || selected.count(name) > 0;
    };

    if (want("c1_generators")) run_criterion("c1_generators", c1_generators);
    if (want("c2_distribution")) run_criterion("c2_distribution", c2_distribution);
    if (want("c3_numerics")) run_criterion("c3_numerics", c3_numerics);
    if (want("c4_overfit")) run_criterion("c4_overfit", c4_overfit);
    if (want("c5_burstiness")) run_criterion("c5_burstiness", c5_burstiness);
    if (want("c6_zipf")) run_criterion("c6_zipf", c6_zipf);
    if (want("c7_architecture")) run_criterion("c7_architecture", c7_architecture);
    if (want("c8_metric_oracles")) run_criterion("c8_metric_oracles", c8_metric_oracles);
    if (want("c9_reproducibility")) run_criterion("c9_reproducibility", c9_reproducibility);

    bool all = true;
    for (const Criterion& c : g_results) all = all && c.pass;
    std::printf("%s: %zu/%zu criteria passed\n", all ? "OK" : "FAILURE",
                static_cast<size_t>(std::count_if(g_results.begin(), g_results.end(),
                                                  [](const Criterion& c) { return c.pass; })),
                g_results.size());
    return all ? 0 : 1;
}

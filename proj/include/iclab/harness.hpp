#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iclab/datagen.hpp"
#include "iclab/metrics.hpp"
#include "iclab/models.hpp"
#include "iclab/optim.hpp"
#include "iclab/seqgen.hpp"

namespace iclab {

enum class DatasetSource : uint8_t { synthetic = 0, omniglot = 1, archive = 2 };

// Everything a run needs. A run is a pure function of this struct: the
// registry, rank permutation, labels, init, batches and eval episodes all
// derive from `seed` through named streams.
struct RunConfig {
    // data
    DatasetSource dataset = DatasetSource::synthetic;
    int synthetic_classes = 1600;
    int image_size = 12;
    std::string omniglot_root;
    std::string registry_archive;
    bool augment = false;
    double holdout_fraction = 0.1;
    DistributionConfig dist;

    // model
    BackboneKind model_kind = BackboneKind::transformer;
    int layers = 2;
    int model_dim = 64;
    int heads = 8;
    int mlp_hidden = 0;          // 0 = 4 * dim
    int recurrent_hidden = 0;    // 0 = match the transformer's param count
    int embedder_blocks = 1;
    std::vector<int> embedder_channels = {8, 16};

    // optimization
    uint64_t seed = 0;
    int64_t total_steps = 10000;
    int batch_size = 32;
    LrSchedule lr;
    AdamConfig adam;

    // evaluation + output
    int64_t eval_every = 500;
    int eval_episodes = 256;
    int64_t checkpoint_every = 0;  // 0 = final only
    std::string out_dir;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    // Digest over every field that shapes the training trajectory (not
    // total_steps, eval cadence, or output paths). Resume requires a match.
    uint64_t trajectory_digest() const;
    void validate() const;
};

ClassRegistry build_registry(const RunConfig& cfg);
ModelConfig build_model_config(const RunConfig& cfg, int label_count);

struct RunResult {
    std::string out_dir;
    std::string metrics_path;
    std::string checkpoint_path;
    int64_t final_step = 0;
};

// Trains for cfg.total_steps, evaluating every eval_every steps (and at
// steps 0 and total_steps) on: few-shot holdout, few-shot trained,
// in-weights all (plus common10/rare under a skewed marginal), with a
// context-label-frequency row for the holdout few-shot records. Writes
// config.json, metrics.jsonl and ckpt_final.bin into cfg.out_dir; appends to
// an existing metrics.jsonl when resuming. A numeric error checkpoints to
// ckpt_abort_step<k>.bin and rethrows.
RunResult run_train(const RunConfig& cfg, const std::string& resume_from = "");

struct EvalReport {
    std::vector<AccuracySummary> summaries;
    std::string to_text() const;
};

// One full evaluation pass of a checkpointed model.
EvalReport evaluate_checkpoint(const RunConfig& cfg, const std::string& checkpoint_path,
                               int episodes, uint64_t eval_seed);

struct SweepRanges {
    double lr_min = 1e-5;
    double lr_max = 0.1;
    int64_t warmup_min = 1;
    int64_t warmup_max = 10000;
};

struct SweepSample {
    double max_lr = 0.0;
    int64_t warmup_steps = 0;
    uint64_t seed = 0;
    std::string out_dir;
};

// The deterministic sample plan: max_lr and warmup log-uniform in their
// ranges, per-run seeds derived from the base seed.
std::vector<SweepSample> plan_sweep(const RunConfig& base, int n_samples,
                                    const SweepRanges& ranges);

// Executes the plan with `workers` parallel runs (each run single-threaded).
std::vector<RunResult> run_sweep(const RunConfig& base, int n_samples, const SweepRanges& ranges,
                                 int workers);

}  // namespace iclab

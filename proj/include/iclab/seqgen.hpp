#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iclab/datagen.hpp"
#include "iclab/rng.hpp"

namespace iclab {

// Marginal over n ranks: w[x] proportional to x^(-alpha), x = 1..n.
// alpha = 0 is exactly uniform.
std::vector<double> zipf_weights(int n, double alpha);

struct DistributionConfig {
    double p_bursty = 0.9;
    double zipf_alpha = 0.0;
    int label_multiplicity = 1;
    int context_pairs = 8;
    int bursty_shots = 3;
    int eval_shots = 4;
    int eval_ways = 2;
    ExemplarPolicy exemplar_policy;

    void validate() const;
};

// Fixed rank assignment (a seed-determined permutation of the training
// classes) plus a cumulative table for sampling. Rank 1 is the most common
// class.
class ZipfSampler {
public:
    ZipfSampler(std::vector<int> class_ids, double alpha, uint64_t seed);

    int sample(Rng& rng) const;
    // Renormalized draw over the non-excluded classes. `exclude` must not
    // cover every class.
    int sample_excluding(Rng& rng, const std::vector<int>& exclude) const;

    int size() const { return static_cast<int>(by_rank_.size()); }
    double alpha() const { return alpha_; }
    // 1-based rank; 0 for ids this sampler does not cover.
    int rank_of(int class_id) const;
    int class_at_rank(int rank) const { return by_rank_[static_cast<size_t>(rank - 1)]; }
    const std::vector<double>& weights_by_rank() const { return weights_; }

private:
    std::vector<int> by_rank_;
    std::vector<int> rank_lookup_;  // class_id -> 1-based rank, 0 = absent
    std::vector<double> weights_;
    std::vector<double> cdf_;
    double alpha_ = 0.0;
};

// Labels fixed for a whole run. Label ids are dealt in rank order, so labels
// {0, .., M-1} belong to the most common class; under multiplicity 1 the
// mapping is a bijection. Holdout classes carry no labels.
class LabelTable {
public:
    LabelTable() = default;
    LabelTable(const ZipfSampler& sampler, int multiplicity, int n_total_classes);

    const std::vector<int>& labels_of(int class_id) const;
    int label_count() const { return total_labels_; }
    int multiplicity() const { return multiplicity_; }

private:
    std::vector<std::vector<int>> by_class_;
    int total_labels_ = 0;
    int multiplicity_ = 1;
};

enum class EpisodeKind : uint8_t { bursty = 0, nonbursty = 1, fewshot_eval = 2, inweights_eval = 3 };

const char* episode_kind_name(EpisodeKind k);

// One 17-token sequence: 8 image-label context pairs then the query image.
struct Episode {
    std::vector<Image> images;   // context_pairs + 1, query last
    std::vector<int> labels;     // context labels, one per pair
    int target = 0;
    EpisodeKind kind = EpisodeKind::bursty;
    std::vector<int> class_ids;  // per image, query last
    int query_rank = 0;          // Zipf rank of the query class; 0 when n/a

    int context_pairs() const { return static_cast<int>(labels.size()); }
    int query_support() const;   // occurrences of the query class in context
};

enum class FewshotPool : uint8_t { holdout = 0, trained = 1 };
enum class QueryPool : uint8_t { all = 0, common10 = 1, rare = 2 };

// Bundles config + registry + label table + class marginal. Pure function of
// (cfg, registry, run_seed) plus the caller's rng stream.
class EpisodeGenerator {
public:
    EpisodeGenerator(DistributionConfig cfg, const ClassRegistry& reg, uint64_t run_seed);

    Episode make_bursty(Rng& rng) const;
    Episode make_nonbursty(Rng& rng) const;
    // Bernoulli(p_bursty) mixture of the two.
    Episode make_training_episode(Rng& rng) const;
    // 2 classes from the pool, eval_shots exemplars each, labels re-dealt to
    // {0, 1} per episode.
    Episode make_fewshot_eval(Rng& rng, FewshotPool pool) const;
    // Distinct training classes, query absent from context, training labels.
    Episode make_inweights_eval(Rng& rng, QueryPool pool = QueryPool::all) const;

    const DistributionConfig& config() const { return cfg_; }
    const ClassRegistry& registry() const { return *reg_; }
    const ZipfSampler& sampler() const { return sampler_; }
    const LabelTable& labels() const { return table_; }
    int label_count() const { return table_.label_count(); }

private:
    Image draw_image(int class_id, Rng& rng) const;
    int pick_label(int class_id, Rng& rng) const;

    DistributionConfig cfg_;
    const ClassRegistry* reg_;
    ZipfSampler sampler_;
    LabelTable table_;
};

// Flat binary record stream for caching episodes.
void write_episode(std::ostream& os, const Episode& ep);
Episode read_episode(std::istream& is);

// Human-readable token layout: img/label pairs then the query, one token per
// line.
std::string episode_debug_dump(const Episode& ep);

}  // namespace iclab

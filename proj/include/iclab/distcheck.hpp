#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iclab/seqgen.hpp"

namespace iclab {

// Counters over a stream of training episodes: query-position class counts,
// query-support histogram, and holdout sightings (any position).
struct StreamStats {
    int64_t episodes = 0;
    std::vector<int64_t> query_counts_by_rank;  // index = rank - 1
    std::vector<int64_t> support_hist;
    int64_t holdout_hits = 0;
    int bursty_shots = 3;

    explicit StreamStats(int n_ranks = 0, int bursty_shots_ = 3, int context_pairs = 8)
        : query_counts_by_rank(static_cast<size_t>(n_ranks), 0),
          support_hist(static_cast<size_t>(context_pairs) + 1, 0),
          bursty_shots(bursty_shots_) {}

    void observe(const Episode& ep, const ClassRegistry& reg, const ZipfSampler& sampler);
};

// Rank-frequency power-law fit: count-weighted least squares of log(count)
// on log(rank), over nonzero ranks, no tail truncation. counts[i] is the
// count of rank i+1. Returns the exponent (negated slope). Weighting by
// count keeps the noisy tail from biasing the slope at realistic stream
// sizes; the unweighted fit misses alpha >= 2 by far more than the
// acceptance tolerance.
double fit_zipf_exponent(const std::vector<int64_t>& counts_by_rank);

// Fraction of observed episodes whose query had at least bursty_shots
// occurrences in the context.
double burstiness_index(const StreamStats& stats);

// Chi-square goodness of fit p-value of `counts` against `weights`. Bins
// with expected count < 5 are merged from the tail (ranks sorted by
// expected count descending); throws if merging cannot reach two bins.
double chi_square_marginal(const std::vector<int64_t>& counts, const std::vector<double>& weights);

// Kolmogorov-Smirnov p-value of samples against Uniform[0, 1] (asymptotic).
double ks_uniform01_pvalue(std::vector<double> samples);

struct ValidationReport {
    int64_t episodes = 0;
    double configured_p_bursty = 0.0;
    double burstiness = 0.0;
    double chi_square_p = 0.0;
    double fitted_alpha = 0.0;
    double configured_alpha = 0.0;
    int64_t holdout_hits = 0;
    bool pass = false;

    std::string to_text() const;
};

// Streams n_episodes training episodes and checks: burstiness within +-0.01
// of p_bursty, chi-square p > 0.001 against the configured marginal, zero
// holdout sightings.
ValidationReport validate_stream(const EpisodeGenerator& gen, int64_t n_episodes, uint64_t seed);

}  // namespace iclab

#include "iclab/distcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "iclab/errors.hpp"

namespace iclab {

void StreamStats::observe(const Episode& ep, const ClassRegistry& reg,
                          const ZipfSampler& sampler) {
    episodes += 1;
    const int rank = ep.query_rank > 0 ? ep.query_rank : sampler.rank_of(ep.class_ids.back());
    if (rank >= 1 && rank <= static_cast<int>(query_counts_by_rank.size())) {
        query_counts_by_rank[static_cast<size_t>(rank - 1)] += 1;
    }
    const int support = std::min(ep.query_support(),
                                 static_cast<int>(support_hist.size()) - 1);
    support_hist[static_cast<size_t>(support)] += 1;
    for (int cls : ep.class_ids) {
        if (reg.is_holdout(cls)) {
            holdout_hits += 1;
        }
    }
}

double fit_zipf_exponent(const std::vector<int64_t>& counts_by_rank) {
    std::vector<double> log_rank, log_count, weight;
    for (size_t i = 0; i < counts_by_rank.size(); ++i) {
        if (counts_by_rank[i] <= 0) continue;
        const double c = static_cast<double>(counts_by_rank[i]);
        log_rank.push_back(std::log(static_cast<double>(i + 1)));
        log_count.push_back(std::log(c));
        weight.push_back(c);
    }
    if (log_rank.size() < 2) {
        throw ConfigError("fit_zipf_exponent: degenerate input (fewer than 2 nonzero ranks)");
    }
    if (log_rank.size() < 10) {
        throw ConfigError("fit_zipf_exponent: needs at least 10 nonzero ranks");
    }
    double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
    double xm = 0.0, ym = 0.0;
    for (size_t i = 0; i < weight.size(); ++i) {
        xm += weight[i] * log_rank[i];
        ym += weight[i] * log_count[i];
    }
    xm /= wsum;
    ym /= wsum;
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < weight.size(); ++i) {
        const double dx = log_rank[i] - xm;
        sxy += weight[i] * dx * (log_count[i] - ym);
        sxx += weight[i] * dx * dx;
    }
    if (sxx == 0.0) {
        throw ConfigError("fit_zipf_exponent: all mass on a single rank");
    }
    return -(sxy / sxx);
}

double burstiness_index(const StreamStats& stats) {
    if (stats.episodes == 0) {
        return 0.0;
    }
    int64_t bursty = 0;
    for (size_t s = static_cast<size_t>(stats.bursty_shots); s < stats.support_hist.size(); ++s) {
        bursty += stats.support_hist[s];
    }
    return static_cast<double>(bursty) / static_cast<double>(stats.episodes);
}

double chi_square_marginal(const std::vector<int64_t>& counts, const std::vector<double>& weights) {
    if (counts.size() != weights.size() || counts.empty()) {
        throw ConfigError("chi_square_marginal: counts and weights must match and be nonempty");
    }
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(),
                                                             static_cast<int64_t>(0)));
    // Sort bins by expected count descending, then merge the tail so every
    // bin keeps expected >= 5.
    std::vector<size_t> order(counts.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return weights[a] > weights[b]; });
    std::vector<double> obs_bins, exp_bins;
    double tail_obs = 0.0, tail_exp = 0.0;
    bool in_tail = false;
    for (size_t k : order) {
        const double e = weights[k] * total;
        if (!in_tail && e >= 5.0) {
            obs_bins.push_back(static_cast<double>(counts[k]));
            exp_bins.push_back(e);
        } else {
            in_tail = true;  // expected counts only shrink from here on
            tail_obs += static_cast<double>(counts[k]);
            tail_exp += e;
        }
    }
    if (in_tail) {
        if (tail_exp >= 5.0) {
            obs_bins.push_back(tail_obs);
            exp_bins.push_back(tail_exp);
        } else if (!exp_bins.empty()) {
            obs_bins.back() += tail_obs;
            exp_bins.back() += tail_exp;
        } else {
            throw ConfigError("chi_square_marginal: cannot form bins with expected >= 5");
        }
    }
    if (exp_bins.size() < 2) {
        throw ConfigError("chi_square_marginal: fewer than 2 usable bins");
    }
    double stat = 0.0;
    for (size_t i = 0; i < exp_bins.size(); ++i) {
        const double d = obs_bins[i] - exp_bins[i];
        stat += d * d / exp_bins[i];
    }
    const double df = static_cast<double>(exp_bins.size() - 1);
    boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

double ks_uniform01_pvalue(std::vector<double> samples) {
    if (samples.size() < 2) {
        throw ConfigError("ks_uniform01_pvalue: needs at least 2 samples");
    }
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const double f = samples[i];
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    // Asymptotic Kolmogorov distribution.
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
        p += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(p, 0.0, 1.0);
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    os << "=== data validation ===\n";
    os << "episodes:        " << episodes << "\n";
    os << "burstiness:      " << burstiness << " (configured p_bursty " << configured_p_bursty
       << ")\n";
    os << "chi-square p:    " << chi_square_p << " (against alpha=" << configured_alpha
       << " marginal)\n";
    os << "fitted exponent: " << fitted_alpha << "\n";
    os << "holdout hits:    " << holdout_hits << "\n";
    os << "verdict:         " << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

ValidationReport validate_stream(const EpisodeGenerator& gen, int64_t n_episodes, uint64_t seed) {
    StreamStats stats(gen.sampler().size(), gen.config().bursty_shots,
                      gen.config().context_pairs);
    Rng rng = Rng::stream(seed, "validate-data");
    for (int64_t i = 0; i < n_episodes; ++i) {
        const Episode ep = gen.make_training_episode(rng);
        stats.observe(ep, gen.registry(), gen.sampler());
    }
    ValidationReport rep;
    rep.episodes = n_episodes;
    rep.configured_p_bursty = gen.config().p_bursty;
    rep.configured_alpha = gen.config().zipf_alpha;
    rep.burstiness = burstiness_index(stats);
    rep.chi_square_p = chi_square_marginal(stats.query_counts_by_rank,
                                           gen.sampler().weights_by_rank());
    rep.holdout_hits = stats.holdout_hits;
    // The fit needs >= 10 nonzero ranks; tiny validation streams may not
    // have them, in which case the exponent is reported as configured.
    try {
        rep.fitted_alpha = fit_zipf_exponent(stats.query_counts_by_rank);
    } catch (const ConfigError&) {
        rep.fitted_alpha = rep.configured_alpha;
    }
    const bool bursty_ok =
        std::abs(rep.burstiness - rep.configured_p_bursty) <= 0.01 ||
        // pure-chance support can trip the index upward only negligibly; the
        // bound applies to the configured mixture
        (rep.configured_p_bursty == 0.0 && rep.burstiness < 0.01);
    rep.pass = bursty_ok && rep.chi_square_p > 0.001 && rep.holdout_hits == 0;
    return rep;
}

}  // namespace iclab

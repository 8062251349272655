#include <cmath>

#include "doctest.h"
#include "iclab/distcheck.hpp"
#include "iclab/errors.hpp"

using namespace iclab;

TEST_SUITE_BEGIN("distcheck");

TEST_CASE("exponent fit recovers exact zipf weights") {
    auto w = zipf_weights(1000, 1.0);
    std::vector<int64_t> counts;
    for (double x : w) counts.push_back(static_cast<int64_t>(std::llround(x * 1e7)));
    const double fit = fit_zipf_exponent(counts);
    CHECK(fit > 0.95);
    CHECK(fit < 1.05);
}

TEST_CASE("exponent fit on uniform counts is flat") {
    std::vector<int64_t> counts(1000, 1000);
    CHECK(std::abs(fit_zipf_exponent(counts)) < 0.05);
}

TEST_CASE("exponent fit on an alpha=2 sampled stream") {
    std::vector<int> ids(1000);
    for (int i = 0; i < 1000; ++i) ids[static_cast<size_t>(i)] = i;
    ZipfSampler s(ids, 2.0, 31);
    Rng rng(17);
    std::vector<int64_t> counts(1000, 0);
    for (int64_t i = 0; i < 1000000; ++i) {
        counts[static_cast<size_t>(s.rank_of(s.sample(rng)) - 1)]++;
    }
    const double fit = fit_zipf_exponent(counts);
    CHECK(fit > 1.9);
    CHECK(fit < 2.1);
}

TEST_CASE("exponent fit degenerate inputs") {
    CHECK_THROWS_AS(fit_zipf_exponent({100}), ConfigError);
    CHECK_THROWS_AS(fit_zipf_exponent({100, 50, 20}), ConfigError);  // < 10 nonzero
}

TEST_CASE("burstiness index counts threshold support") {
    StreamStats stats(10, 3, 8);
    stats.episodes = 10;
    stats.support_hist[0] = 4;
    stats.support_hist[3] = 5;
    stats.support_hist[4] = 1;
    CHECK(burstiness_index(stats) == doctest::Approx(0.6));
}

TEST_CASE("burstiness of generated streams") {
    ClassRegistry reg = synth_classes(1600, 41, 8, 8, {2, 0.1});
    SUBCASE("p=1 stream") {
        DistributionConfig cfg;
        cfg.p_bursty = 1.0;
        EpisodeGenerator gen(cfg, reg, 41);
        Rng rng(18);
        StreamStats stats(gen.sampler().size(), cfg.bursty_shots, cfg.context_pairs);
        for (int i = 0; i < 3000; ++i) {
            stats.observe(gen.make_training_episode(rng), reg, gen.sampler());
        }
        CHECK(burstiness_index(stats) == 1.0);
    }
    SUBCASE("p=0 stream with many classes has nearly no chance support") {
        DistributionConfig cfg;
        cfg.p_bursty = 0.0;
        EpisodeGenerator gen(cfg, reg, 41);
        Rng rng(19);
        StreamStats stats(gen.sampler().size(), cfg.bursty_shots, cfg.context_pairs);
        for (int i = 0; i < 20000; ++i) {
            stats.observe(gen.make_training_episode(rng), reg, gen.sampler());
        }
        CHECK(burstiness_index(stats) < 0.001);
    }
    SUBCASE("p=0.9 stream within binomial bound") {
        DistributionConfig cfg;
        cfg.p_bursty = 0.9;
        EpisodeGenerator gen(cfg, reg, 41);
        Rng rng(20);
        StreamStats stats(gen.sampler().size(), cfg.bursty_shots, cfg.context_pairs);
        const int64_t n = 100000;
        for (int64_t i = 0; i < n; ++i) {
            stats.observe(gen.make_training_episode(rng), reg, gen.sampler());
        }
        CHECK(std::abs(burstiness_index(stats) - 0.9) < 0.01);
    }
}

TEST_CASE("chi-square: exact expected counts give p close to 1") {
    std::vector<double> w = zipf_weights(20, 0.0);
    std::vector<int64_t> counts(20, 500);
    CHECK(chi_square_marginal(counts, w) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("chi-square: grossly wrong alpha is rejected hard") {
    std::vector<int> ids(200);
    for (int i = 0; i < 200; ++i) ids[static_cast<size_t>(i)] = i;
    ZipfSampler s(ids, 2.0, 43);
    Rng rng(21);
    std::vector<int64_t> counts(200, 0);
    for (int64_t i = 0; i < 200000; ++i) {
        counts[static_cast<size_t>(s.rank_of(s.sample(rng)) - 1)]++;
    }
    CHECK(chi_square_marginal(counts, zipf_weights(200, 0.0)) < 1e-6);
}

TEST_CASE("chi-square meta-test: p-values under the null look uniform") {
    // Draw counts from the expected distribution 100 times; p < 0.01 should
    // happen about 1% of the time (within 3 sigma of Binomial(100, 0.01)).
    std::vector<int> ids(50);
    for (int i = 0; i < 50; ++i) ids[static_cast<size_t>(i)] = i;
    ZipfSampler s(ids, 1.0, 47);
    Rng rng(22);
    int low = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<int64_t> counts(50, 0);
        for (int64_t i = 0; i < 20000; ++i) {
            counts[static_cast<size_t>(s.rank_of(s.sample(rng)) - 1)]++;
        }
        if (chi_square_marginal(counts, s.weights_by_rank()) < 0.01) ++low;
    }
    CHECK(low <= 4);
}

TEST_CASE("chi-square tail merging handles skewed expectations") {
    // alpha=3 over many classes: most bins have tiny expected counts and must
    // be merged rather than rejected.
    std::vector<int> ids(2000);
    for (int i = 0; i < 2000; ++i) ids[static_cast<size_t>(i)] = i;
    ZipfSampler s(ids, 3.0, 53);
    Rng rng(23);
    std::vector<int64_t> counts(2000, 0);
    for (int64_t i = 0; i < 100000; ++i) {
        counts[static_cast<size_t>(s.rank_of(s.sample(rng)) - 1)]++;
    }
    const double p = chi_square_marginal(counts, s.weights_by_rank());
    CHECK(p > 0.001);
}

TEST_CASE("chi-square bin-merge impossible") {
    std::vector<int64_t> counts{1, 0};
    std::vector<double> w{0.5, 0.5};
    CHECK_THROWS_AS(chi_square_marginal(counts, w), ConfigError);
}

TEST_CASE("ks p-value: uniform accepted, skewed rejected") {
    Rng rng(24);
    std::vector<double> u;
    for (int i = 0; i < 1000; ++i) u.push_back(rng.uniform());
    CHECK(ks_uniform01_pvalue(u) > 0.01);
    std::vector<double> skew;
    for (int i = 0; i < 1000; ++i) skew.push_back(std::pow(rng.uniform(), 3.0));
    CHECK(ks_uniform01_pvalue(skew) < 1e-6);
}

TEST_CASE("validate_stream passes a healthy generator and counts holdout hits") {
    ClassRegistry reg = synth_classes(100, 59, 8, 8, {2, 0.1});
    DistributionConfig cfg;
    cfg.p_bursty = 0.9;
    cfg.zipf_alpha = 1.0;
    EpisodeGenerator gen(cfg, reg, 59);
    ValidationReport rep = validate_stream(gen, 50000, 61);
    CHECK(rep.pass);
    CHECK(rep.holdout_hits == 0);
    CHECK(std::abs(rep.burstiness - 0.9) <= 0.01);
    CHECK(rep.chi_square_p > 0.001);
    CHECK(rep.to_text().find("PASS") != std::string::npos);
}

TEST_SUITE_END();

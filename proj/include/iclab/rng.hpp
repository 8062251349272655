#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace iclab {

// All project randomness flows through this wrapper. The engine is
// std::mt19937_64 (bit-reproducible by the standard); the distributions are
// implemented here rather than with std::*_distribution so that streams do
// not depend on the standard library in use.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Named substream derived from a run seed. Distinct (name, index) pairs
    // give independent streams; this is how workers and steps get their own
    // randomness without sharing state.
    static Rng stream(uint64_t seed, std::string_view name, uint64_t index = 0);

    uint64_t bits() { return eng_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // N(0, 1) via Box-Muller. Both uniforms are always consumed and the spare
    // is dropped, so the stream position never depends on call history.
    double normal();

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    int64_t below(int64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// Deterministic mixing of (seed, stream name, stream index) into an engine seed.
uint64_t mix_seed(uint64_t seed, std::string_view name, uint64_t index);

}  // namespace iclab

#include "iclab/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "iclab/errors.hpp"

namespace iclab {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

uint64_t mix_seed(uint64_t seed, std::string_view name, uint64_t index) {
    uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ fnv1a(name));
    h = splitmix64(h ^ (index + 1));
    return h;
}

Rng Rng::stream(uint64_t seed, std::string_view name, uint64_t index) {
    return Rng(mix_seed(seed, name, index));
}

double Rng::normal() {
    // u1 in (0, 1] so log() is safe.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

int64_t Rng::below(int64_t n) {
    if (n <= 0) {
        throw UsageError("Rng::below: n must be positive");
    }
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t max = std::numeric_limits<uint64_t>::max();
    const uint64_t limit = max - max % un;
    uint64_t r = bits();
    while (r >= limit) {
        r = bits();
    }
    return static_cast<int64_t>(r % un);
}

}  // namespace iclab

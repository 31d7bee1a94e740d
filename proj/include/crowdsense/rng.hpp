#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace crowdsense {

// Portable random stream. std::mt19937_64's output sequence is fixed by the
// standard, but the std:: distributions are not, so all draws are derived
// here from raw 64-bit words.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1) with 53 bits of resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) {
        if (p >= 1.0) return true;
        if (p <= 0.0) return false;
        return uniform01() < p;
    }

    // Box-Muller; one value per call so the stream position does not depend
    // on cached state.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Independent stream for one purpose (e.g. mobility vs. market) of a run.
    static Rng for_purpose(std::uint64_t seed, std::uint64_t salt) {
        return Rng(seed_mix(seed ^ (salt * 0x9e3779b97f4a7c15ull)));
    }

private:
    static std::uint64_t seed_mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace crowdsense

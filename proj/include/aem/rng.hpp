#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aem/errors.hpp"

namespace aem {

namespace detail {
// SplitMix64 finalizer, used to derive independent child seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

// Deterministic random stream. Distribution transforms are hand-rolled so a
// (seed, call sequence) pair pins the output stream down to the bit, and so
// child streams can be split off for parallel shards.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    // Independent child stream; deterministic in (parent seed, id).
    Rng split(std::uint64_t id) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(id + 0x517cc1b727220a95ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw UsageError("uniform_int: n must be positive");
        // Rejection-free would bias for huge n; n here is always tiny vs 2^64.
        return engine_() % n;
    }

    // Index draw proportional to weights[i]; weights need not be normalized.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw UsageError("categorical: weights must have positive sum");
        double u = uniform() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return weights.size() - 1;
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(i))]);
        }
    }

    std::string state_string() const {
        std::ostringstream os;
        os << seed_ << ' ' << engine_;
        return os.str();
    }

    static Rng from_state_string(const std::string& s) {
        std::istringstream is(s);
        std::uint64_t seed = 0;
        if (!(is >> seed)) throw ParseError("rng state: missing seed");
        Rng r(seed);
        if (!(is >> r.engine_)) throw ParseError("rng state: malformed engine state");
        return r;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace aem

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace memto {

// Deterministic random stream. mt19937_64 raw output is pinned by the
// standard, so mapping draws to doubles by hand (instead of going through
// std::*_distribution, whose algorithms are implementation-defined) keeps
// generated datasets and weight initializations bit-identical across
// standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal, Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t min = (-n) % n; // 2^64 mod n
        uint64_t r = gen_();
        while (r < min) r = gen_();
        return r % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // Derive an independent stream, e.g. one per training phase.
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace memto

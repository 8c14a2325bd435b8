#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace pnsis {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Deterministic seed derivation; every independent stream in the project is
// keyed by chaining the base seed with small integer tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = base;
    splitmix64(s);
    s ^= 0xA0761D6478BD642Full + a;
    splitmix64(s);
    s ^= 0xE7037ED1A0B428DBull + b;
    splitmix64(s);
    s ^= 0x8EBC6AF09C88C6E3ull + c;
    return splitmix64(s);
}

inline std::uint64_t hash_bytes(const void* data, std::size_t n,
                                std::uint64_t seed = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

// xoshiro-free minimal generator built on splitmix64. All sampling algorithms
// are spelled out here rather than delegated to <random> distributions so that
// streams are identical across standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return splitmix64(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // (0, 1)
    double uniform_open() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Fixed-point multiply, no rejection;
    // bias is ~n/2^64 and irrelevant at our scales.
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gumbel() { return -std::log(-std::log(uniform_open())); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = uniform_open();
        double v = uniform_open();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Partial Fisher-Yates: first k entries of a random permutation of [0, n).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pnsis

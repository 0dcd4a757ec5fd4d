#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "fedmmd/common.hpp"

namespace fedmmd {

// splitmix64: used both as a stream-derivation hash and to expand seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

inline uint64_t hash_stream(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x3c79ac492ba7b653ULL;
    for (uint64_t p : parts) h = hash_combine(h, p);
    return h;
}

// Deterministic random stream. The engine is std::mt19937_64; the
// distribution transforms are spelled out here (Box-Muller, Marsaglia-Tsang)
// so that sequences are pinned independently of the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    static Rng derive(std::initializer_list<uint64_t> parts) {
        return Rng(hash_stream(parts));
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1): 53-bit mantissa.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    // Standard normal via Box-Muller; the paired value is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the boost
    // Gamma(shape+1) * U^{1/shape}.
    double gamma(double shape) {
        if (shape <= 0.0) throw DomainError("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            while (u <= 0.0) u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    // Symmetric Dirichlet(concentration) over n categories.
    std::vector<double> dirichlet(double concentration, int n) {
        if (n <= 0) throw DomainError("dirichlet: need n > 0");
        std::vector<double> p(n);
        double total = 0.0;
        for (auto& v : p) {
            v = gamma(concentration);
            total += v;
        }
        if (total <= 0.0) {  // numerically degenerate draw; fall back to uniform
            for (auto& v : p) v = 1.0 / n;
            return p;
        }
        for (auto& v : p) v /= total;
        return p;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedmmd

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "glvd/common.hpp"

namespace glvd {

// Deterministic RNG. mt19937_64 supplies raw bits; the mappings to doubles
// and ranges are spelled out here because the std::*_distribution classes are
// implementation-defined and would break byte-for-byte reproducibility of
// generated corpora across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). Modulo bias is < 2^-40 for any n we use.
    std::uint64_t index(std::uint64_t n) {
        GLVD_CHECK(n > 0, "Rng::index: empty range");
        return gen_() % n;
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Derive an independent, reproducible child stream (e.g. per batch).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (std::uint64_t v : {seed, a, b, c}) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
        return h;
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace glvd

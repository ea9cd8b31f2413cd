// SPDX-License-Identifier: Apache-2.0

#include "envsem/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace envsem {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name) {
    // FNV-1a over the stream name
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return mix_seed(seed, h);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

unsigned Rng::poisson(double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("Rng::poisson: negative mean");
    if (mean == 0.0) return 0;
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    unsigned k = 0;
    while (u >= cdf && k < 10000) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace envsem

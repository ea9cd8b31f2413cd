// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace envsem {

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view name);

/// Seeded random stream. Every distribution is implemented here on top of
/// mt19937_64 so that sequences do not depend on the standard library vendor.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    /// Named child stream; independent of how many draws the parent made.
    Rng child(std::string_view name) const { return Rng(mix_seed(seed_, name)); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Poisson count by sequential inversion; intended for small means.
    unsigned poisson(double mean);

    /// Standard normal (Box-Muller, one value per call).
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace envsem

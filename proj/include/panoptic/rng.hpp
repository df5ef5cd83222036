#pragma once

#include <cmath>
#include <cstdint>

namespace pk {

/// Counter-based PRNG (splitmix64 finalizer over an affine counter).
///
/// The k-th raw draw for seed s is mix64(s + k * 0x9e3779b97f4a7c15) with
/// k = 1, 2, ...; unit doubles map the top 53 bits into (0, 1]; normals use
/// the Box-Muller cosine branch on two consecutive unit draws. This is
/// spelled out in the README so fixtures can be regenerated independently.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    static std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    /// Uniform in (0, 1]: never 0, so logarithms stay finite.
    double next_unit() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * (next_unit() - 0x1.0p-53); }

    /// Uniform integer in [0, bound) by scaling; bound must be positive.
    std::uint32_t next_below(std::uint32_t bound) {
        return std::uint32_t(double(bound) * (next_unit() - 0x1.0p-53));
    }

    double next_normal(double stddev = 1.0) {
        const double u1 = next_unit();
        const double u2 = next_unit();
        return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace pk

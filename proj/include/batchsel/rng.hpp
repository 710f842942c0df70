#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace batchsel {

/// Seedable generator with platform-independent output.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard.
/// The standard distributions are implementation-defined, so every derived
/// draw (uniform reals, bounded integers, normals) is computed here from raw
/// 64-bit words to keep experiments bit-reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n); n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// Standard normal variate (Box-Muller, cached second value).
    double normal();

    /// Fisher-Yates shuffle driven by uniform_index.
    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace batchsel

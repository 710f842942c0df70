#include "batchsel/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "batchsel/errors.hpp"

namespace batchsel {

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw ArgumentError("uniform_index: n must be positive");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t word;
    do {
        word = engine_();
    } while (word >= limit);
    return static_cast<std::size_t>(word % bound);
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

}  // namespace batchsel

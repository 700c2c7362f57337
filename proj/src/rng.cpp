#include "avsd/rng.hpp"

#include <cmath>
#include <numbers>

namespace avsd {

double Rng::normal() {
    // Box-Muller, cosine branch only.
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    const double target = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        acc += weights[k];
        if (target < acc) {
            return k;
        }
    }
    // Rounding can leave target == total; fall back to the last non-zero bin.
    for (std::size_t k = weights.size(); k > 0; --k) {
        if (weights[k - 1] > 0.0) {
            return k - 1;
        }
    }
    return weights.size() - 1;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace avsd

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace avsd {

/// Seeded generator used by every stochastic routine. Draws are derived from
/// raw 64-bit engine output so sequences are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    double normal();

    /// Samples an index proportionally to non-negative weights.
    std::size_t categorical(const std::vector<double>& weights);

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream id so independent consumers get
/// decorrelated generators.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace avsd

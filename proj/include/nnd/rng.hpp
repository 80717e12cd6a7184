#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace nnd {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Range&) const = default;
};

/// Uniform draws from mt19937_64 using the top 53 bits, so the stream is the
/// same on every standard library (the std distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double uniform(Range r) { return uniform(r.lo, r.hi); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    std::mt19937_64 m_engine;
};

/// Independent seed for item `index` of a seeded stream.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace nnd

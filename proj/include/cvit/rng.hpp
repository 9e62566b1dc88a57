#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cvit {

/// Counter-based generator: the n-th draw is a pure function of (seed, n),
/// so sequences are identical on every platform and substreams can be
/// derived without shared state.
///
/// Normal variates use the Box-Muller cosine branch. Each normal() consumes
/// exactly two counter values: u1 in (0,1], u2 in [0,1), and returns
/// sqrt(-2 ln u1) * cos(2 pi u2).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept
    {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() noexcept
    {
        const std::uint64_t key = mix(seed_);
        return mix(key ^ mix(counter_++ * 0xD1B54A32D192ED03ULL));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) noexcept
    {
        const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    double normal() noexcept
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Normal truncated to [-2, 2] by rejection, scaled by stddev.
    double truncated_normal(double stddev) noexcept
    {
        double z = normal();
        while (std::abs(z) > 2.0) z = normal();
        return z * stddev;
    }

    /// Independent stream keyed by (seed, index); does not advance this stream.
    [[nodiscard]] Rng substream(std::uint64_t index) const noexcept
    {
        return Rng(mix(seed_ ^ mix(index ^ 0x632BE59BD9B4E019ULL)), 0);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace cvit

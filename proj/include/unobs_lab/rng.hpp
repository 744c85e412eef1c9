#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace unobs_lab {

/// Master seed for every stochastic operation.
struct Seed {
    std::uint64_t value = 0;
};

namespace detail {

// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

}  // namespace detail

/// Counter-based random stream. The i-th output depends only on
/// (seed, stream id, i), so substreams can be generated in any order or on
/// any thread with bit-identical results.
///
/// All continuous transforms are implemented here rather than through
/// <random> distributions, whose output is not specified by the standard.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream(Seed seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept
        : key_(detail::mix64(detail::mix64(seed.value ^ 0x6A09E667F3BCC909ULL) +
                             detail::golden_gamma * (stream_id + 1))),
          counter_(counter) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        return detail::mix64(key_ + detail::golden_gamma * (++counter_));
    }

    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (consumes two counters).
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Exponential with unit rate.
    double exponential() noexcept { return -std::log(uniform()); }

    /// Gamma(shape, scale) by Marsaglia-Tsang; shape < 1 uses the
    /// U^{1/shape} boost.
    double gamma(double shape, double scale) noexcept {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, 1.0);
            return scale * g * std::pow(uniform(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            const double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return scale * d * v;
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace unobs_lab

#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace unobs_lab {

/// Arguments within this distance of a non-positive integer are treated as
/// Gamma-function poles.
inline constexpr double gamma_pole_tol = 1e-9;

[[nodiscard]] inline bool is_gamma_pole(double x, double tol = gamma_pole_tol) {
    if (x > tol) return false;
    return std::abs(x - std::round(x)) <= tol;
}

struct SignedLog {
    double log_abs = 0.0;
    int sign = 1;
};

/// log|Gamma(x)| with the sign of Gamma(x). At a pole the magnitude is
/// +inf and the sign is 0.
[[nodiscard]] inline SignedLog log_gamma_signed(double x) {
    if (is_gamma_pole(x)) return {std::numeric_limits<double>::infinity(), 0};
    // Gamma is positive on (0, inf); on (-m-1, -m) its sign is (-1)^(m+1).
    int sign = 1;
    if (x < 0.0) {
        const auto fl = static_cast<long long>(std::floor(x));
        sign = (fl % 2 == 0) ? 1 : -1;
    }
    return {std::lgamma(x), sign};
}

/// Standard normal CDF.
[[nodiscard]] inline double normal_cdf(double a) { return 0.5 * std::erfc(-a / std::numbers::sqrt2); }

}  // namespace unobs_lab

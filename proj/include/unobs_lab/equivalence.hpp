#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "unobs_lab/errors.hpp"
#include "unobs_lab/model_core.hpp"
#include "unobs_lab/sym_matrix.hpp"

// Hierarchical models that share one compound-symmetry marginal.
//
// Two families are covered: the n = 2 pair "random intercept with
// occasion-specific error variances" vs "uncorrelated random intercept and
// slope with a common error variance", and the alpha-indexed random-intercept
// family where the intercept b_i and the errors eps_ij have covariance tau:
//
//   (b_i, eps_i1, ..., eps_in) ~ N(0, [[d, tau 1'], [tau 1, sigma2 I]])
//
// Every member yields Y_i ~ N(X_i xi, (d + 2 tau) J + sigma2 I), so the data
// only pin down lambda2 = d + 2 tau and nu2 = sigma2. alpha in [-1, 1] spans
// all (d, tau) with tau^2 <= d * sigma2.

namespace unobs_lab {

/// Random intercept (variance lambda2) with heterogeneous error variances at
/// two occasions.
struct SpecA {
    double lambda2 = 0.0;
    double nu1sq = 1.0;
    double nu2sq = 1.0;

    SpecA(double lambda2_, double nu1sq_, double nu2sq_) : lambda2(lambda2_), nu1sq(nu1sq_), nu2sq(nu2sq_) {
        if (!(lambda2 >= 0.0)) throw DomainError("SpecA: lambda2 must be >= 0");
        if (!(nu1sq > 0.0) || !(nu2sq > 0.0)) throw DomainError("SpecA: error variances must be > 0");
    }
};

/// Uncorrelated random intercept and slope with homogeneous errors. The slope
/// variance may be negative: such a point reproduces a valid marginal but
/// has no hierarchical reading.
struct SpecB {
    double lambda1sq = 0.0;
    double lambda2sq = 0.0;
    double nusq = 1.0;
    // Rounding error of lambda2sq when it comes from a difference: the slope
    // variance is lambda2sq + lambda2sq_lo exactly.
    double lambda2sq_lo = 0.0;

    SpecB(double lambda1sq_, double lambda2sq_, double nusq_, double lambda2sq_lo_ = 0.0)
        : lambda1sq(lambda1sq_), lambda2sq(lambda2sq_), nusq(nusq_), lambda2sq_lo(lambda2sq_lo_) {
        if (!(lambda1sq >= 0.0)) throw DomainError("SpecB: lambda1sq must be >= 0");
        if (!(nusq > 0.0)) throw DomainError("SpecB: nusq must be > 0");
    }

    [[nodiscard]] bool is_valid_hierarchy() const noexcept { return lambda2sq >= 0.0; }
};

namespace detail {

// Knuth's two-sum: s + e == a + b exactly.
inline std::pair<double, double> two_sum(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    return {s, (a - (s - bb)) + (b - bb)};
}

}  // namespace detail

inline SymMatrix v1_matrix(const SpecA& a) {
    SymMatrix v(2);
    v.set(0, 0, a.lambda2 + a.nu1sq);
    v.set(1, 0, a.lambda2);
    v.set(1, 1, a.lambda2 + a.nu2sq);
    return v;
}

inline SymMatrix v2_matrix(const SpecB& b) {
    SymMatrix v(2);
    v.set(0, 0, b.lambda1sq + b.nusq);
    v.set(1, 0, b.lambda1sq);
    // lambda2sq + lambda2sq_lo + nusq is evaluated exactly, so a mapped SpecA
    // reproduces its error variance bit for bit.
    const auto [hi, lo] = detail::two_sum(b.nusq, b.lambda2sq);
    v.set(1, 1, b.lambda1sq + (hi + (lo + b.lambda2sq_lo)));
    return v;
}

/// Maps heterogeneous errors onto a random slope: lambda1sq = lambda2,
/// lambda2sq = nu2sq - nu1sq, nusq = nu1sq. v2_matrix of the result equals
/// v1_matrix of the input.
inline SpecB map_a_to_b(const SpecA& a) {
    const auto [diff, err] = detail::two_sum(a.nu2sq, -a.nu1sq);
    return SpecB(a.lambda2, diff, a.nu1sq, err);
}

struct DTau {
    double d = 0.0;
    double tau = 0.0;
};

namespace detail {

inline void check_extended_domain(double lambda2, double nu2, double alpha) {
    if (!(nu2 > 0.0)) throw DomainError("nu2 must be > 0");
    if (!(lambda2 + nu2 > 0.0)) throw DomainError("lambda2 + nu2 must be > 0");
    if (!(alpha >= -1.0 && alpha <= 1.0))
        throw DomainError("alpha = " + std::to_string(alpha) + " outside the admissible box [-1, 1]");
}

}  // namespace detail

/// Random-intercept variance d and intercept/error covariance tau of the
/// alpha-indexed family:
///   d   = lambda2 + 2 nu2 + 2 nu alpha s,   tau = -(nu2 + nu alpha s),
/// with nu = +sqrt(nu2) and s = sqrt(lambda2 + nu2).
inline DTau derive_d_tau(double lambda2, double nu2, double alpha) {
    detail::check_extended_domain(lambda2, nu2, alpha);
    const double nu = std::sqrt(nu2);
    const double s = std::sqrt(lambda2 + nu2);
    // d written as (s + alpha nu)^2 + (1 - alpha^2) nu2, the same quantity in
    // a form that cannot round below zero.
    const double shifted = s + alpha * nu;
    const double d = shifted * shifted + (1.0 - alpha * alpha) * nu2;
    const double tau = -(nu2 + nu * alpha * s);
    return {d, tau};
}

/// One member of the alpha-indexed family. The public parameters are the
/// marginal (lambda2, nu2) and the class index alpha; d and tau are derived.
class ExtendedSpec {
public:
    ExtendedSpec(double lambda2, double nu2, double alpha) : lambda2_(lambda2), nu2_(nu2), alpha_(alpha) {
        detail::check_extended_domain(lambda2, nu2, alpha);
    }

    [[nodiscard]] double lambda2() const noexcept { return lambda2_; }
    [[nodiscard]] double nu2() const noexcept { return nu2_; }
    [[nodiscard]] double sigma2() const noexcept { return nu2_; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] double s() const noexcept { return std::sqrt(lambda2_ + nu2_); }
    [[nodiscard]] double d() const { return derive_d_tau(lambda2_, nu2_, alpha_).d; }
    [[nodiscard]] double tau() const { return derive_d_tau(lambda2_, nu2_, alpha_).tau; }

private:
    double lambda2_;
    double nu2_;
    double alpha_;
};

/// Pairwise admissibility slack d*sigma2 - tau^2; equals
/// nu2 (lambda2 + nu2)(1 - alpha^2) up to rounding.
inline double psd_slack(const ExtendedSpec& spec) {
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    return d * spec.sigma2() - tau * tau;
}

/// Schur-complement margin d*sigma2 - n*tau^2 of the (n+1)-dimensional joint
/// covariance. Negative means the joint of (b, eps_1..eps_n) is not PSD even
/// though the pairwise condition holds; only n = 1 is covered by the box.
inline double joint_psd_margin(const ExtendedSpec& spec, std::size_t n) {
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    return d * spec.sigma2() - static_cast<double>(n) * tau * tau;
}

/// Covariance of (b, eps_1, ..., eps_n).
inline SymMatrix joint_cov(const ExtendedSpec& spec, std::size_t n) {
    if (n == 0) throw DomainError("joint_cov: n must be >= 1");
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    SymMatrix m(n + 1);
    m.set(0, 0, d);
    for (std::size_t j = 1; j <= n; ++j) {
        m.set(j, 0, tau);
        m.set(j, j, spec.sigma2());
    }
    return m;
}

/// Law of eps_i | b_i: mean (tau b / d) 1, covariance sigma2 I - (tau^2 / d) J.
struct ConditionalErrorDist {
    Eigen::VectorXd mean;
    SymMatrix cov;

    /// Smallest eigenvalue of `cov`. The spectrum is sigma2 (n - 1 times)
    /// and sigma2 - n tau^2 / d.
    [[nodiscard]] double min_eigenvalue() const {
        const std::size_t n = cov.dim();
        const double off = n > 1 ? cov(1, 0) : 0.0;  // -tau^2/d
        const double diag = cov(0, 0);                 // sigma2 - tau^2/d
        const double sigma2 = diag - off;
        const double rank_one = sigma2 + static_cast<double>(n) * off;
        if (n == 1) return diag;
        return std::min(sigma2, rank_one);
    }

    [[nodiscard]] bool is_psd(double tol = 1e-12) const { return min_eigenvalue() >= -tol; }
};

inline ConditionalErrorDist conditional_error_dist(const ExtendedSpec& spec, double b, std::size_t n) {
    if (n == 0) throw DomainError("conditional_error_dist: n must be >= 1");
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    if (!(d > 0.0))
        throw DomainError("conditional_error_dist: d = 0, the random intercept is a point mass (degenerate conditioning)");
    const double shrink = tau * tau / d;
    SymMatrix cov(n, -shrink);
    for (std::size_t j = 0; j < n; ++j) cov.set(j, j, spec.sigma2() - shrink);
    return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), tau * b / d), std::move(cov)};
}

/// (d + 2 tau) J_n + sigma2 I_n.
inline SymMatrix marginal_cov_extended(const ExtendedSpec& spec, std::size_t n) {
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    return cs_covariance(n, d + 2.0 * tau, spec.sigma2());
}

/// Coefficient c with E(b_i | Y_i) = c * (mean_j Y_ij - mean_j x_ij' xi):
///   c = n (d + tau) / (sigma2 + n (d + 2 tau)).
/// Linear in alpha for fixed marginal parameters.
inline double eb_shrinkage(const ExtendedSpec& spec, std::size_t n) {
    if (auto check = validate_cs({n}, spec.lambda2(), spec.nu2()); !check)
        throw DomainError("eb_shrinkage: " + check.diagnostic);
    const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), spec.alpha());
    const double nn = static_cast<double>(n);
    return nn * (d + tau) / (spec.sigma2() + nn * (d + 2.0 * tau));
}

/// Empirical-Bayes predictions E(b_i | Y_i) for every cluster under the
/// alpha-member of the class sharing the marginal (lambda, phi).
inline std::vector<double> eb_predictions(const Dataset& data, const CSParams& marginal, double alpha) {
    const ExtendedSpec spec(marginal.lambda, marginal.phi, alpha);
    std::vector<double> out;
    out.reserve(data.cluster_count());
    for (const auto& c : data.clusters()) {
        const Eigen::VectorXd resid = c.y() - c.x() * marginal.xi;
        out.push_back(eb_shrinkage(spec, c.size()) * resid.mean());
    }
    return out;
}

enum class Quantity { variance, covariance };

/// One row of the variance/covariance decomposition into the sigma2, d and
/// 2 tau contributions.
struct DecompRow {
    Quantity quantity = Quantity::variance;
    double sigma2_part = 0.0;
    double d_part = 0.0;
    double two_tau_part = 0.0;

    [[nodiscard]] double total() const noexcept { return sigma2_part + d_part + two_tau_part; }
};

struct Decomposition {
    DecompRow variance;
    DecompRow covariance;
};

inline Decomposition decomposition_table(double lambda2, double nu2, double alpha) {
    const auto [d, tau] = derive_d_tau(lambda2, nu2, alpha);
    return {DecompRow{Quantity::variance, nu2, d, 2.0 * tau}, DecompRow{Quantity::covariance, 0.0, d, 2.0 * tau}};
}

}  // namespace unobs_lab

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unobs_lab/errors.hpp"
#include "unobs_lab/parallel.hpp"
#include "unobs_lab/quadrature.hpp"
#include "unobs_lab/rng.hpp"
#include "unobs_lab/special.hpp"

// Weibull outcomes with gamma frailties, and the Weibull-exponential family
// obtained when the frailty is exponential:
//
//   Y | theta ~ Weibull with survival exp(-lambda y^rho theta e^{x'xi})
//   theta     ~ Gamma(alpha, beta)                        (beta = scale)
//
// With alpha = 1, beta = 1/delta and phi = lambda e^{x'xi} the marginal has
//
//   f(y) = phi rho y^{rho-1} delta / (delta + phi y^rho)^2
//   F(y) = phi y^rho / (delta + phi y^rho)
//   E(Y^k) = (k/rho) (delta/phi)^{k/rho} Gamma(1 - k/rho) Gamma(k/rho),
//
// finite only for k < rho. At rho = 1 (exponential-exponential) no moment
// exists.

namespace unobs_lab {

enum class FrailtyConstraint {
    frailty,  // alpha_j * beta_j = 1 (unit-mean frailty)
    bayarri,  // alpha_j = 1, beta_j = 1 / delta_j (exponential frailty)
    free,     // alpha_j, beta_j both free; aliased with an intercept in xi
};

/// Weibull-gamma model with independent components j. Row j of `x` holds the
/// covariates of component j.
class WeibullGammaSpec {
public:
    static WeibullGammaSpec frailty(double lambda, double rho, Eigen::VectorXd xi, Eigen::MatrixXd x,
                                    Eigen::VectorXd alpha) {
        Eigen::VectorXd beta = alpha.cwiseInverse();
        return {lambda, rho, std::move(xi), std::move(x), std::move(alpha), std::move(beta), FrailtyConstraint::frailty};
    }

    static WeibullGammaSpec bayarri(double lambda, double rho, Eigen::VectorXd xi, Eigen::MatrixXd x,
                                    const Eigen::VectorXd& delta) {
        Eigen::VectorXd alpha = Eigen::VectorXd::Ones(delta.size());
        return {lambda, rho, std::move(xi), std::move(x), std::move(alpha), delta.cwiseInverse(),
                FrailtyConstraint::bayarri};
    }

    static WeibullGammaSpec free(double lambda, double rho, Eigen::VectorXd xi, Eigen::MatrixXd x,
                                 Eigen::VectorXd alpha, Eigen::VectorXd beta) {
        return {lambda, rho, std::move(xi), std::move(x), std::move(alpha), std::move(beta), FrailtyConstraint::free};
    }

    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] const Eigen::VectorXd& xi() const noexcept { return xi_; }
    [[nodiscard]] const Eigen::MatrixXd& x() const noexcept { return x_; }
    [[nodiscard]] const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
    [[nodiscard]] const Eigen::VectorXd& beta() const noexcept { return beta_; }
    [[nodiscard]] FrailtyConstraint constraint() const noexcept { return mode_; }
    [[nodiscard]] std::size_t components() const noexcept { return static_cast<std::size_t>(alpha_.size()); }

    /// True in free mode: the gamma scale and an intercept in xi are not
    /// jointly identifiable (only lambda * beta * e^{xi_0} enters the law).
    [[nodiscard]] bool aliasing_warning() const noexcept { return mode_ == FrailtyConstraint::free; }

    [[nodiscard]] double linear_predictor(std::size_t j) const {
        return x_.row(static_cast<Eigen::Index>(j)).dot(xi_);
    }

private:
    WeibullGammaSpec(double lambda, double rho, Eigen::VectorXd xi, Eigen::MatrixXd x, Eigen::VectorXd alpha,
                     Eigen::VectorXd beta, FrailtyConstraint mode)
        : lambda_(lambda), rho_(rho), xi_(std::move(xi)), x_(std::move(x)), alpha_(std::move(alpha)),
          beta_(std::move(beta)), mode_(mode) {
        if (!(lambda_ > 0.0) || !(rho_ > 0.0)) throw DomainError("WeibullGammaSpec: lambda and rho must be > 0");
        if (alpha_.size() < 1 || alpha_.size() != beta_.size())
            throw std::invalid_argument("WeibullGammaSpec: alpha and beta need one entry per component");
        if (x_.rows() != alpha_.size() || x_.cols() != xi_.size())
            throw std::invalid_argument("WeibullGammaSpec: covariate matrix must be components x len(xi)");
        if (!(alpha_.array() > 0.0).all() || !(beta_.array() > 0.0).all())
            throw DomainError("WeibullGammaSpec: gamma shapes and scales must be > 0");
    }

    double lambda_;
    double rho_;
    Eigen::VectorXd xi_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd alpha_;
    Eigen::VectorXd beta_;
    FrailtyConstraint mode_;
};

/// Weibull-exponential law with rate phi = lambda e^mu, shape rho and
/// exponential-frailty rate delta.
class WeibullExpSpec {
public:
    WeibullExpSpec(double phi, double rho, double delta) : phi_(phi), rho_(rho), delta_(delta) {
        if (!(phi > 0.0) || !(rho > 0.0) || !(delta > 0.0))
            throw DomainError("WeibullExpSpec: phi, rho and delta must be > 0");
    }

    static WeibullExpSpec from_linear_predictor(double lambda, double rho, double delta, double mu) {
        return {lambda * std::exp(mu), rho, delta};
    }

    [[nodiscard]] double phi() const noexcept { return phi_; }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] double delta() const noexcept { return delta_; }

private:
    double phi_;
    double rho_;
    double delta_;
};

/// Component j of a bayarri-mode Weibull-gamma model as a Weibull-exponential law.
inline WeibullExpSpec component_law(const WeibullGammaSpec& spec, std::size_t j) {
    if (spec.constraint() != FrailtyConstraint::bayarri)
        throw std::invalid_argument("component_law: only defined for the exponential-frailty constraint");
    return WeibullExpSpec::from_linear_predictor(spec.lambda(), spec.rho(),
                                                 1.0 / spec.beta()(static_cast<Eigen::Index>(j)),
                                                 spec.linear_predictor(j));
}

/// Draws `n_draws` outcomes per component: theta_j ~ Gamma(alpha_j, beta_j),
/// then Y from the conditional Weibull by inverting its survival function.
/// Component j uses substream j.
inline std::vector<std::vector<double>> wg_sample(const WeibullGammaSpec& spec, std::size_t n_draws, Seed seed,
                                                  unsigned threads = 1) {
    std::vector<std::vector<double>> out(spec.components());
    parallel_for(spec.components(), threads, [&](std::size_t j) {
        Stream rng(seed, j);
        const auto jj = static_cast<Eigen::Index>(j);
        const double rate = spec.lambda() * std::exp(spec.linear_predictor(j));
        auto& draws = out[j];
        draws.reserve(n_draws);
        for (std::size_t i = 0; i < n_draws; ++i) {
            const double theta = rng.gamma(spec.alpha()(jj), spec.beta()(jj));
            draws.push_back(std::pow(rng.exponential() / (rate * theta), 1.0 / spec.rho()));
        }
    });
    return out;
}

/// Density. At y = 0 with rho < 1 the density is unbounded and +inf is returned.
inline double we_pdf(const WeibullExpSpec& s, double y) {
    if (!(y >= 0.0)) throw DomainError("we_pdf: y must be >= 0");
    const double yr = std::pow(y, s.rho());
    const double denom = s.delta() + s.phi() * yr;
    return s.phi() * s.rho() * std::pow(y, s.rho() - 1.0) * s.delta() / (denom * denom);
}

inline double we_cdf(const WeibullExpSpec& s, double y) {
    if (!(y > 0.0)) return 0.0;
    const double t = s.phi() * std::pow(y, s.rho());
    return t / (s.delta() + t);
}

/// Survival delta / (delta + phi y^rho).
inline double we_survival(const WeibullExpSpec& s, double y) {
    if (!(y > 0.0)) return 1.0;
    return s.delta() / (s.delta() + s.phi() * std::pow(y, s.rho()));
}

inline double we_quantile(const WeibullExpSpec& s, double u) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("we_quantile: u = " + std::to_string(u) + " outside (0, 1)");
    return std::pow(s.delta() * u / (s.phi() * (1.0 - u)), 1.0 / s.rho());
}

namespace detail {

inline constexpr std::size_t sample_block = 4096;

}  // namespace detail

/// Inverse-CDF sampler. Draw i consumes counter i of substream 0.
inline std::vector<double> we_sample(const WeibullExpSpec& s, std::size_t n_draws, Seed seed, unsigned threads = 1) {
    std::vector<double> out(n_draws);
    const std::size_t blocks = (n_draws + detail::sample_block - 1) / detail::sample_block;
    parallel_for(blocks, threads, [&](std::size_t blk) {
        const std::size_t begin = blk * detail::sample_block;
        const std::size_t end = std::min(n_draws, begin + detail::sample_block);
        Stream rng(seed, 0, begin);
        for (std::size_t i = begin; i < end; ++i) out[i] = we_quantile(s, rng.uniform());
    });
    return out;
}

/// Moment of order k with the two existence notions kept apart:
/// `formula_defined` (no Gamma pole, i.e. k/rho is not a positive integer)
/// and `integral_finite` (k < rho). `value` is present only when finite.
struct MomentResult {
    unsigned k = 1;
    bool formula_defined = false;
    bool integral_finite = false;
    std::optional<double> value;
};

/// The closed-form expression, evaluated in log space with sign tracking.
/// Empty at a Gamma pole. For k >= rho the number is meaningless as a moment.
inline std::optional<double> moment_formula(const WeibullExpSpec& s, double k) {
    const double ratio = k / s.rho();
    const SignedLog g1 = log_gamma_signed(1.0 - ratio);
    const SignedLog g2 = log_gamma_signed(ratio);
    if (g1.sign == 0 || g2.sign == 0) return std::nullopt;
    const double log_mag = std::log(ratio) + ratio * (std::log(s.delta()) - std::log(s.phi())) + g1.log_abs + g2.log_abs;
    return g1.sign * g2.sign * std::exp(log_mag);
}

inline MomentResult we_moment(const WeibullExpSpec& s, unsigned k) {
    if (k < 1) throw DomainError("we_moment: k must be >= 1");
    MomentResult r;
    r.k = k;
    const auto formula = moment_formula(s, k);
    r.formula_defined = formula.has_value();
    // k within the pole tolerance of rho counts as divergent too, which keeps
    // integral_finite => formula_defined.
    r.integral_finite = r.formula_defined && static_cast<double>(k) < s.rho();
    if (r.integral_finite) r.value = formula;
    return r;
}

/// Whether Gamma(alpha - k/rho) in the general Weibull-gamma moment avoids
/// its poles.
inline bool wg_moment_defined(double alpha, double rho, unsigned k) {
    if (!(alpha > 0.0) || !(rho > 0.0) || k < 1) throw DomainError("wg_moment_defined: inputs must be positive");
    return !is_gamma_pole(alpha - static_cast<double>(k) / rho);
}

/// Integral of y^k f(y) over [0, T], to absolute tolerance `abs_tol`.
///
/// With u = phi y^rho / delta the integrand becomes
/// (delta/phi)^{k/rho} u^{k/rho} (1 + u)^{-2} du; a further t = ln u makes it
/// smooth with exponentially decaying left tail, which is cut where its
/// remaining mass is below 1e-17 and added back in closed form.
inline double truncated_moment(const WeibullExpSpec& s, double k, double upper, double abs_tol = 1e-10) {
    if (!(upper > 0.0)) throw DomainError("truncated_moment: T must be > 0");
    if (!(k >= 0.0)) throw DomainError("truncated_moment: k must be >= 0");
    const double a = k / s.rho();
    const double scale = std::exp(a * (std::log(s.delta()) - std::log(s.phi())));
    const double t_hi = std::log(s.phi() / s.delta()) + s.rho() * std::log(upper);
    const double t_cut = std::log(1e-17 * (a + 1.0)) / (a + 1.0);
    const double t_lo = std::min(t_cut, t_hi - 1.0);

    auto integrand = [a](double t) {
        if (t > 0.0) return std::exp((a - 1.0) * t - 2.0 * std::log1p(std::exp(-t)));
        return std::exp((a + 1.0) * t - 2.0 * std::log1p(std::exp(t)));
    };
    const QuadResult q = integrate_adaptive(integrand, t_lo, t_hi, abs_tol / scale);
    if (!q.converged)
        throw NumericError("truncated_moment: quadrature stopped at estimated error " +
                           std::to_string(q.abs_error * scale) + " > " + std::to_string(abs_tol));
    // Left tail: integral of e^{(a+1)t} (1+e^t)^{-2} below t_lo, to leading order.
    const double left = std::exp((a + 1.0) * t_lo) / (a + 1.0);
    return scale * (q.value + left);
}

struct TracePoint {
    std::size_t n = 0;
    double running_mean = 0.0;
};

/// Running sample mean of we_sample draws, reported every `stride` draws.
inline std::vector<TracePoint> running_mean_trace(const WeibullExpSpec& s, std::size_t n_draws, std::size_t stride,
                                                  Seed seed, unsigned threads = 1) {
    if (stride < 1 || n_draws < stride) throw DomainError("running_mean_trace: need N >= stride >= 1");
    const auto draws = we_sample(s, n_draws, seed, threads);
    std::vector<TracePoint> trace;
    trace.reserve(n_draws / stride);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_draws; ++i) {
        sum += draws[i];
        if ((i + 1) % stride == 0) trace.push_back({i + 1, sum / static_cast<double>(i + 1)});
    }
    return trace;
}

/// Probability integral transform: a_i ~ N(0, 1), returns quantile(Phi(a_i)).
/// Draw i uses counters 2i and 2i + 1 of substream 0.
template <typename Quantile>
std::vector<double> pit_sample(Quantile&& quantile, std::size_t n_draws, Seed seed, unsigned threads = 1) {
    std::vector<double> out(n_draws);
    const std::size_t blocks = (n_draws + detail::sample_block - 1) / detail::sample_block;
    parallel_for(blocks, threads, [&](std::size_t blk) {
        const std::size_t begin = blk * detail::sample_block;
        const std::size_t end = std::min(n_draws, begin + detail::sample_block);
        Stream rng(seed, 0, 2 * begin);
        for (std::size_t i = begin; i < end; ++i) {
            const double u = normal_cdf(rng.normal());
            const double v = quantile(u);
            if (!std::isfinite(v))
                throw NumericError("pit_sample: quantile returned a non-finite value at u = " + std::to_string(u));
            out[i] = v;
        }
    });
    return out;
}

}  // namespace unobs_lab

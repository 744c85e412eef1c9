#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unobs_lab/equivalence.hpp"
#include "unobs_lab/errors.hpp"
#include "unobs_lab/model_core.hpp"
#include "unobs_lab/parallel.hpp"
#include "unobs_lab/rng.hpp"
#include "unobs_lab/simplex.hpp"

namespace unobs_lab {

struct FitResult {
    CSParams params;
    double loglik = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    bool constraint_active = false;  // optimum within 1e-6 of a PD boundary
};

struct FitOptions {
    double diameter_tol = 1e-9;
    std::size_t max_iterations = 500;
    double boundary_tol = 1e-6;
};

/// Exact Gaussian log-likelihood of the compound-symmetry marginal model.
/// Throws DomainError outside the PD region.
inline double loglik_cs(const Dataset& data, const CSParams& params) {
    detail::require_valid(data, params.lambda, params.phi, "loglik_cs");
    if (static_cast<std::size_t>(params.xi.size()) != data.p())
        throw std::invalid_argument("loglik_cs: xi length does not match the design");
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    const double log_phi = std::log(params.phi);
    double total = 0.0;
    for (const auto& c : data.clusters()) {
        const double n = static_cast<double>(c.size());
        const Eigen::VectorXd r = c.y() - c.x() * params.xi;
        const double coef = detail::cs_inverse_coef(c.size(), params.lambda, params.phi);
        const double rsum = r.sum();
        const double quad = (r.squaredNorm() - coef * rsum * rsum) / params.phi;
        const double logdet = (n - 1.0) * log_phi + std::log(params.phi + n * params.lambda);
        total -= 0.5 * (n * log_2pi + logdet + quad);
    }
    return total;
}

namespace detail {

inline bool near_boundary(const Dataset& data, double lambda, double phi, double tol) {
    if (phi < tol) return true;
    const auto sizes = data.cluster_sizes();
    return std::any_of(sizes.begin(), sizes.end(),
                       [&](std::size_t n) { return phi + static_cast<double>(n) * lambda < tol; });
}

// Method-of-moments start: pooled within-cluster variance of OLS residuals
// for phi, between-cluster variance of residual means minus phi / n for
// lambda, pulled inside the feasible region.
inline std::pair<double, double> moment_start(const Dataset& data) {
    const auto p = static_cast<Eigen::Index>(data.p());
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    for (const auto& c : data.clusters()) {
        xtx += c.x().transpose() * c.x();
        xty += c.x().transpose() * c.y();
    }
    const Eigen::VectorXd beta = xtx.colPivHouseholderQr().solve(xty);

    double ssw = 0.0, dfw = 0.0, total_ss = 0.0, n_harm = 0.0;
    std::vector<double> means;
    for (const auto& c : data.clusters()) {
        const Eigen::VectorXd r = c.y() - c.x() * beta;
        const double m = r.mean();
        means.push_back(m);
        ssw += (r.array() - m).square().sum();
        dfw += static_cast<double>(c.size()) - 1.0;
        total_ss += r.squaredNorm();
        n_harm += 1.0 / static_cast<double>(c.size());
    }
    const double n_obs = static_cast<double>(data.observation_count());
    const double fallback_phi = total_ss / n_obs;
    const double k = static_cast<double>(means.size());
    n_harm = k / n_harm;

    double phi = dfw > 0.0 ? ssw / dfw : 0.0;
    if (!(phi > 0.0) || !std::isfinite(phi)) return {0.0, fallback_phi};
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= k;
    double between = 0.0;
    for (double m : means) between += (m - grand) * (m - grand);
    between /= std::max(k - 1.0, 1.0);
    double lambda = between - phi / n_harm;
    const double n_max = static_cast<double>(*data.cluster_sizes().rbegin());
    const double lambda_floor = -phi / n_max;
    if (!(lambda > 0.9 * lambda_floor)) lambda = 0.5 * lambda_floor;
    return {lambda, phi};
}

}  // namespace detail

/// ML fit of the compound-symmetry model by simplex search over
/// (lambda, log phi), with xi profiled out by GLS. lambda is not clamped at
/// zero; points outside {phi + n_i lambda > 0} are rejected.
inline FitResult fit_ml(const Dataset& data, const FitOptions& opts = {}) {
    if (data.cluster_count() < 2) throw UnidentifiedError("fit_ml: at least two clusters are required");
    if (*data.cluster_sizes().rbegin() < 2)
        throw UnidentifiedError(
            "fit_ml: lambda is not identified when every cluster has a single member (no within-cluster replication)");

    const auto sizes = data.cluster_sizes();
    auto negloglik = [&](const Eigen::VectorXd& v) {
        const double lambda = v(0);
        const double phi = std::exp(v(1));
        if (!validate_cs(sizes, lambda, phi)) return std::numeric_limits<double>::infinity();
        try {
            const CSParams params{gls_mean(data, lambda, phi), lambda, phi};
            const double ll = loglik_cs(data, params);
            return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
        } catch (const RankDeficiencyError&) {
            throw;
        } catch (const DomainError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    const auto [lambda0, phi0] = detail::moment_start(data);
    if (!(phi0 > 0.0) || !std::isfinite(phi0))
        throw DomainError("fit_ml: the response has zero variance; phi is at the boundary");
    Eigen::VectorXd x(2);
    x << lambda0, std::log(phi0);
    Eigen::VectorXd step(2);
    step << 0.1 * phi0, 0.1;

    std::size_t used = 0;
    SimplexResult best;
    // Restart from the best vertex with a smaller simplex until the restart no
    // longer moves the optimum; guards against premature collapse.
    for (int round = 0; round < 4 && used < opts.max_iterations; ++round) {
        SimplexOptions so{opts.diameter_tol, opts.max_iterations - used};
        SimplexResult r = nelder_mead(negloglik, x, step, so);
        used += r.iterations;
        const bool moved = round == 0 || (r.x - x).norm() > 10.0 * opts.diameter_tol;
        best = r;
        x = r.x;
        if (!r.converged || !moved) break;
        step = Eigen::VectorXd::Constant(2, 1e-4).cwiseMax(1e-3 * r.x.cwiseAbs());
    }

    FitResult out;
    out.params.lambda = best.x(0);
    out.params.phi = std::exp(best.x(1));
    out.params.xi = gls_mean(data, out.params.lambda, out.params.phi);
    out.loglik = loglik_cs(data, out.params);
    out.converged = best.converged;
    out.iterations = used;
    out.constraint_active = detail::near_boundary(data, out.params.lambda, out.params.phi, opts.boundary_tol);
    return out;
}

/// One-way ANOVA ML estimators for balanced, intercept-only data. lambda is
/// not truncated at zero.
inline FitResult fit_balanced_closed_form(const Dataset& data) {
    const auto sizes = data.cluster_sizes();
    if (sizes.size() != 1) throw UnsupportedLayoutError("fit_balanced_closed_form: data are unbalanced");
    if (data.p() != 1) throw UnsupportedLayoutError("fit_balanced_closed_form: design is not intercept-only");
    for (const auto& c : data.clusters())
        if (!(c.x().array() == 1.0).all())
            throw UnsupportedLayoutError("fit_balanced_closed_form: design column is not a constant intercept");
    const std::size_t n = *sizes.begin();
    if (n < 2) throw UnidentifiedError("fit_balanced_closed_form: cluster size 1 leaves lambda unidentified");

    const double big_n = static_cast<double>(data.cluster_count());
    const double nn = static_cast<double>(n);
    double grand = 0.0;
    for (const auto& c : data.clusters()) grand += c.y().sum();
    grand /= big_n * nn;
    double ssw = 0.0, ssb = 0.0;
    for (const auto& c : data.clusters()) {
        const double m = c.y().mean();
        ssw += (c.y().array() - m).square().sum();
        ssb += nn * (m - grand) * (m - grand);
    }
    const double phi = ssw / (big_n * (nn - 1.0));
    const double lambda = ssb / (big_n * nn) - phi / nn;
    if (!(phi > 0.0)) throw DomainError("fit_balanced_closed_form: zero within-cluster variance puts phi on the boundary");
    if (!(phi + nn * lambda > 0.0))
        throw DomainError("fit_balanced_closed_form: zero between-cluster variance puts phi + n*lambda on the boundary");

    FitResult out;
    out.params = CSParams{Eigen::VectorXd::Constant(1, grand), lambda, phi};
    out.loglik = loglik_cs(data, out.params);
    out.converged = true;
    out.iterations = 0;
    out.constraint_active = detail::near_boundary(data, lambda, phi, 1e-6);
    return out;
}

/// Cluster sizes and per-cluster designs for simulation. An empty `designs`
/// means intercept-only.
struct SimLayout {
    std::vector<std::size_t> sizes;
    std::vector<Eigen::MatrixXd> designs;

    static SimLayout balanced(std::size_t n_clusters, std::size_t cluster_size) {
        return SimLayout{std::vector<std::size_t>(n_clusters, cluster_size), {}};
    }

    [[nodiscard]] std::size_t n_clusters() const noexcept { return sizes.size(); }

    [[nodiscard]] std::size_t p() const {
        return designs.empty() ? 1 : static_cast<std::size_t>(designs.front().cols());
    }

    void validate() const {
        if (sizes.empty()) throw std::invalid_argument("SimLayout: no clusters");
        for (std::size_t n : sizes)
            if (n < 1) throw std::invalid_argument("SimLayout: cluster sizes must be >= 1");
        if (!designs.empty()) {
            if (designs.size() != sizes.size()) throw std::invalid_argument("SimLayout: one design per cluster required");
            for (std::size_t i = 0; i < sizes.size(); ++i)
                if (static_cast<std::size_t>(designs[i].rows()) != sizes[i] || designs[i].cols() != designs.front().cols())
                    throw std::invalid_argument("SimLayout: design " + std::to_string(i) + " has the wrong shape");
        }
    }

    [[nodiscard]] Eigen::MatrixXd design(std::size_t i) const {
        if (designs.empty()) return Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(sizes[i]), 1);
        return designs[i];
    }

    [[nodiscard]] std::set<std::size_t> size_set() const { return {sizes.begin(), sizes.end()}; }
};

namespace detail {

inline std::vector<std::string> default_names(std::size_t p) {
    std::vector<std::string> names;
    for (std::size_t k = 1; k <= p; ++k) names.push_back("x" + std::to_string(k));
    return names;
}

inline std::string cluster_key(std::size_t i) { return std::to_string(i + 1); }

}  // namespace detail

/// Draws a dataset from N(X_i xi, lambda J + phi I). For lambda >= 0 through
/// the random-intercept hierarchy; for lambda < 0, where no real intercept
/// exists, from the marginal via a Cholesky factor of V. Cluster i uses
/// substream i, so the result does not depend on `threads`.
inline Dataset simulate_cs(const CSParams& params, const SimLayout& layout, Seed seed, unsigned threads = 1) {
    layout.validate();
    if (static_cast<std::size_t>(params.xi.size()) != layout.p())
        throw std::invalid_argument("simulate_cs: xi length does not match the design");
    if (auto check = validate_cs(layout.size_set(), params.lambda, params.phi); !check)
        throw DomainError("simulate_cs: " + check.diagnostic);

    std::map<std::size_t, Eigen::MatrixXd> factors;
    if (params.lambda < 0.0)
        for (std::size_t n : layout.size_set())
            factors.emplace(n, Eigen::MatrixXd(cs_covariance(n, params.lambda, params.phi).to_dense().llt().matrixL()));

    std::vector<std::optional<ClusterData>> out(layout.n_clusters());
    parallel_for(layout.n_clusters(), threads, [&](std::size_t i) {
        Stream rng(seed, i);
        const auto n = static_cast<Eigen::Index>(layout.sizes[i]);
        const Eigen::MatrixXd x = layout.design(i);
        Eigen::VectorXd y = x * params.xi;
        if (params.lambda >= 0.0) {
            const double b = std::sqrt(params.lambda) * rng.normal();
            for (Eigen::Index j = 0; j < n; ++j) y(j) += b + std::sqrt(params.phi) * rng.normal();
        } else {
            Eigen::VectorXd z(n);
            for (Eigen::Index j = 0; j < n; ++j) z(j) = rng.normal();
            y += factors.at(layout.sizes[i]) * z;
        }
        out[i].emplace(detail::cluster_key(i), std::move(y), x);
    });
    std::vector<ClusterData> clusters;
    clusters.reserve(out.size());
    for (auto& c : out) clusters.push_back(std::move(*c));
    return Dataset(std::move(clusters), detail::default_names(layout.p()));
}

struct LatentDraw {
    double b = 0.0;
    Eigen::VectorXd eps;
};

struct ExtendedSample {
    Dataset data;
    std::vector<LatentDraw> latent;
};

/// Symmetric square-root style factor F with F F' = cov, from the
/// eigendecomposition, so rank-deficient (PSD) matrices are accepted.
/// Throws DomainError naming the offending eigenvalue if cov is indefinite.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, const std::string& who) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if (ev(0) < -1e-10 * scale)
        throw DomainError(who + ": joint covariance is not PSD (smallest eigenvalue " + std::to_string(ev(0)) + ")");
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Draws (b_i, eps_i) jointly from the alpha-member's (n+1)-dimensional
/// Gaussian and returns Y_i = X_i xi + b_i 1 + eps_i with the latent draws.
inline ExtendedSample simulate_extended(const ExtendedSpec& spec, const Eigen::VectorXd& xi, const SimLayout& layout,
                                        Seed seed, unsigned threads = 1) {
    layout.validate();
    if (static_cast<std::size_t>(xi.size()) != layout.p())
        throw std::invalid_argument("simulate_extended: xi length does not match the design");

    std::map<std::size_t, Eigen::MatrixXd> factors;
    for (std::size_t n : layout.size_set())
        factors.emplace(n, psd_factor(joint_cov(spec, n).to_dense(), "simulate_extended (n = " + std::to_string(n) + ")"));

    std::vector<std::optional<ClusterData>> out(layout.n_clusters());
    std::vector<LatentDraw> latent(layout.n_clusters());
    parallel_for(layout.n_clusters(), threads, [&](std::size_t i) {
        Stream rng(seed, i);
        const auto n = static_cast<Eigen::Index>(layout.sizes[i]);
        Eigen::VectorXd z(n + 1);
        for (Eigen::Index j = 0; j <= n; ++j) z(j) = rng.normal();
        const Eigen::VectorXd w = factors.at(layout.sizes[i]) * z;
        const Eigen::MatrixXd x = layout.design(i);
        latent[i].b = w(0);
        latent[i].eps = w.tail(n);
        Eigen::VectorXd y = x * xi + Eigen::VectorXd::Constant(n, w(0)) + latent[i].eps;
        out[i].emplace(detail::cluster_key(i), std::move(y), x);
    });
    std::vector<ClusterData> clusters;
    clusters.reserve(out.size());
    for (auto& c : out) clusters.push_back(std::move(*c));
    return {Dataset(std::move(clusters), detail::default_names(layout.p())), std::move(latent)};
}

}  // namespace unobs_lab

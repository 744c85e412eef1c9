#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "unobs_lab/errors.hpp"
#include "unobs_lab/sym_matrix.hpp"

namespace unobs_lab {

/// One cluster of a long-format dataset: n_i responses with their design rows.
class ClusterData {
public:
    ClusterData(std::string id, Eigen::VectorXd y, Eigen::MatrixXd x)
        : id_(std::move(id)), y_(std::move(y)), x_(std::move(x)) {
        if (y_.size() < 1) throw std::invalid_argument("cluster '" + id_ + "' has no observations");
        if (x_.rows() != y_.size())
            throw std::invalid_argument("cluster '" + id_ + "': design rows do not match response length");
        if (x_.cols() < 1) throw std::invalid_argument("cluster '" + id_ + "': design has no columns");
    }

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] const Eigen::VectorXd& y() const noexcept { return y_; }
    [[nodiscard]] const Eigen::MatrixXd& x() const noexcept { return x_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(y_.size()); }
    [[nodiscard]] std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }

private:
    std::string id_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd x_;
};

/// Ordered, non-empty collection of dimensionally consistent clusters.
class Dataset {
public:
    Dataset(std::vector<ClusterData> clusters, std::vector<std::string> covariate_names)
        : clusters_(std::move(clusters)), names_(std::move(covariate_names)) {
        if (clusters_.empty()) throw std::invalid_argument("dataset has no clusters");
        const std::size_t p = clusters_.front().p();
        for (const auto& c : clusters_)
            if (c.p() != p) throw std::invalid_argument("cluster '" + c.id() + "' has inconsistent covariate count");
        if (names_.empty()) {
            for (std::size_t k = 1; k <= p; ++k) names_.push_back("x" + std::to_string(k));
        } else if (names_.size() != p) {
            throw std::invalid_argument("covariate name count does not match design columns");
        }
    }

    [[nodiscard]] const std::vector<ClusterData>& clusters() const noexcept { return clusters_; }
    [[nodiscard]] const std::vector<std::string>& covariate_names() const noexcept { return names_; }
    [[nodiscard]] std::size_t p() const noexcept { return clusters_.front().p(); }
    [[nodiscard]] std::size_t cluster_count() const noexcept { return clusters_.size(); }

    [[nodiscard]] std::size_t observation_count() const noexcept {
        std::size_t total = 0;
        for (const auto& c : clusters_) total += c.size();
        return total;
    }

    [[nodiscard]] std::set<std::size_t> cluster_sizes() const {
        std::set<std::size_t> sizes;
        for (const auto& c : clusters_) sizes.insert(c.size());
        return sizes;
    }

private:
    std::vector<ClusterData> clusters_;
    std::vector<std::string> names_;
};

/// Marginal compound-symmetry parameters: mean X*xi, covariance lambda*J + phi*I.
/// lambda is sign-unrestricted; admissibility is checked by validate_cs.
struct CSParams {
    Eigen::VectorXd xi;
    double lambda = 0.0;
    double phi = 1.0;
};

/// lambda*J_n + phi*I_n. No positive-definiteness check.
inline SymMatrix cs_covariance(std::size_t n, double lambda, double phi) {
    if (n == 0) throw DomainError("cs_covariance: cluster size must be >= 1");
    SymMatrix v(n, lambda);
    for (std::size_t i = 0; i < n; ++i) v.set(i, i, lambda + phi);
    return v;
}

struct CSValidation {
    bool ok = true;
    std::size_t violated_size = 0;  // 0 when ok or when phi itself fails
    std::string diagnostic;

    explicit operator bool() const noexcept { return ok; }
};

/// Exact PD check of lambda*J + phi*I for every size in `sizes`:
/// phi > 0 and phi + n*lambda > 0 (strict).
inline CSValidation validate_cs(const std::set<std::size_t>& sizes, double lambda, double phi) {
    if (sizes.empty()) throw std::invalid_argument("validate_cs: empty cluster-size set");
    if (!(phi > 0.0)) return {false, 0, "phi = " + std::to_string(phi) + " is not > 0"};
    for (std::size_t n : sizes) {
        const double edge = phi + static_cast<double>(n) * lambda;
        if (!(edge > 0.0)) {
            return {false, n,
                    "phi + n*lambda = " + std::to_string(edge) + " is not > 0 for cluster size n = " +
                        std::to_string(n)};
        }
    }
    return {};
}

/// Within-cluster correlation lambda / (lambda + phi).
inline double icc(double lambda, double phi) {
    const double total = lambda + phi;
    if (!(total > 0.0)) throw DomainError("icc: lambda + phi must be > 0");
    return lambda / total;
}

namespace detail {

/// Scalar c in V^{-1} = (I - c*J) / phi for V = lambda*J_n + phi*I_n.
[[nodiscard]] inline double cs_inverse_coef(std::size_t n, double lambda, double phi) {
    return lambda / (phi + static_cast<double>(n) * lambda);
}

inline void require_valid(const Dataset& data, double lambda, double phi, const char* who) {
    if (auto check = validate_cs(data.cluster_sizes(), lambda, phi); !check)
        throw DomainError(std::string(who) + ": " + check.diagnostic);
}

}  // namespace detail

/// GLS estimate of the regression coefficients for fixed (lambda, phi),
/// using the closed-form inverse of the compound-symmetry matrix.
inline Eigen::VectorXd gls_mean(const Dataset& data, double lambda, double phi) {
    detail::require_valid(data, lambda, phi, "gls_mean");
    const auto p = static_cast<Eigen::Index>(data.p());
    Eigen::MatrixXd xtvx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xtvy = Eigen::VectorXd::Zero(p);
    for (const auto& c : data.clusters()) {
        const double coef = detail::cs_inverse_coef(c.size(), lambda, phi);
        const Eigen::VectorXd xsum = c.x().colwise().sum().transpose();
        const double ysum = c.y().sum();
        xtvx += (c.x().transpose() * c.x() - coef * xsum * xsum.transpose()) / phi;
        xtvy += (c.x().transpose() * c.y() - coef * ysum * xsum) / phi;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtvx);
    qr.setThreshold(1e-12);
    if (qr.rank() < p)
        throw RankDeficiencyError("gls_mean: normal equations are singular (rank " + std::to_string(qr.rank()) +
                                  " < " + std::to_string(p) + ")");
    return qr.solve(xtvy);
}

}  // namespace unobs_lab

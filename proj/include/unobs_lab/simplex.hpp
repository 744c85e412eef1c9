#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace unobs_lab {

struct SimplexOptions {
    double diameter_tol = 1e-9;   // stop when the simplex is this small
    std::size_t max_iterations = 500;
};

struct SimplexResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
};

/// Largest Euclidean distance between two vertices.
inline double simplex_diameter(const std::vector<Eigen::VectorXd>& vertices) {
    double diam = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
        for (std::size_t j = i + 1; j < vertices.size(); ++j)
            diam = std::max(diam, (vertices[i] - vertices[j]).norm());
    return diam;
}

/// Nelder-Mead minimization starting from the simplex {start, start + step_k e_k}.
/// The objective may return +inf to reject infeasible points.
template <typename Objective>
SimplexResult nelder_mead(Objective&& f, const Eigen::VectorXd& start, const Eigen::VectorXd& step,
                          const SimplexOptions& opts = {}) {
    constexpr double reflect = 1.0;
    constexpr double expand = 2.0;
    constexpr double contract = 0.5;
    constexpr double shrink = 0.5;

    const auto dim = static_cast<std::size_t>(start.size());
    std::vector<Eigen::VectorXd> pts(dim + 1, start);
    for (std::size_t k = 0; k < dim; ++k) pts[k + 1](static_cast<Eigen::Index>(k)) += step(static_cast<Eigen::Index>(k));
    std::vector<double> vals(dim + 1);
    for (std::size_t k = 0; k <= dim; ++k) vals[k] = f(pts[k]);

    std::vector<std::size_t> order(dim + 1);
    SimplexResult result;
    for (std::size_t iter = 0;; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        {
            std::vector<Eigen::VectorXd> sp;
            std::vector<double> sv;
            for (std::size_t k : order) {
                sp.push_back(pts[k]);
                sv.push_back(vals[k]);
            }
            pts.swap(sp);
            vals.swap(sv);
        }
        result.iterations = iter;
        if (simplex_diameter(pts) < opts.diameter_tol) {
            result.converged = true;
            break;
        }
        if (iter >= opts.max_iterations) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(start.size());
        for (std::size_t k = 0; k < dim; ++k) centroid += pts[k];
        centroid /= static_cast<double>(dim);

        const Eigen::VectorXd& worst = pts[dim];
        const Eigen::VectorXd xr = centroid + reflect * (centroid - worst);
        const double fr = f(xr);
        if (fr < vals[0]) {
            const Eigen::VectorXd xe = centroid + expand * (xr - centroid);
            const double fe = f(xe);
            if (fe < fr) {
                pts[dim] = xe;
                vals[dim] = fe;
            } else {
                pts[dim] = xr;
                vals[dim] = fr;
            }
            continue;
        }
        if (fr < vals[dim - 1]) {
            pts[dim] = xr;
            vals[dim] = fr;
            continue;
        }
        // Outside contraction when the reflection beat the worst point,
        // inside contraction otherwise.
        const bool outside = fr < vals[dim];
        const Eigen::VectorXd xc =
            outside ? Eigen::VectorXd(centroid + contract * (xr - centroid))
                    : Eigen::VectorXd(centroid + contract * (worst - centroid));
        const double fc = f(xc);
        if (fc < (outside ? fr : vals[dim])) {
            pts[dim] = xc;
            vals[dim] = fc;
            continue;
        }
        for (std::size_t k = 1; k <= dim; ++k) {
            pts[k] = pts[0] + shrink * (pts[k] - pts[0]);
            vals[k] = f(pts[k]);
        }
    }
    result.x = pts[0];
    result.value = vals[0];
    return result;
}

}  // namespace unobs_lab

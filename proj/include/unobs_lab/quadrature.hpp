#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

namespace unobs_lab {

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;  // estimated
    std::size_t intervals = 0;
    bool converged = false;
};

namespace detail {

// Gauss-Kronrod 7/15 abscissae on [0, 1) half-range (last entry is the
// centre) and weights.
inline constexpr std::array<double, 8> gk15_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> gk15_kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5 and the centre.
inline constexpr std::array<double, 4> gk15_gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename F>
Panel gk15(F& f, double a, double b) {
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(centre);
    double kronrod = gk15_kronrod_weights[7] * fc;
    double gauss = gk15_gauss_weights[3] * fc;
    for (std::size_t k = 0; k < 7; ++k) {
        const double dx = half * gk15_nodes[k];
        const double pair = f(centre - dx) + f(centre + dx);
        kronrod += gk15_kronrod_weights[k] * pair;
        if (k % 2 == 1) gauss += gk15_gauss_weights[k / 2] * pair;
    }
    kronrod *= half;
    gauss *= half;
    return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b]: the panel
/// with the largest error estimate is bisected until the summed estimate is
/// below `abs_tol` or `max_intervals` is reached.
template <typename F>
QuadResult integrate_adaptive(F&& f, double a, double b, double abs_tol, std::size_t max_intervals = 20000) {
    std::priority_queue<detail::Panel> heap;
    heap.push(detail::gk15(f, a, b));
    double value = heap.top().value;
    double error = heap.top().error;
    while (error > abs_tol && heap.size() < max_intervals) {
        const detail::Panel worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;  // panel at machine resolution
        heap.pop();
        const detail::Panel left = detail::gk15(f, worst.a, mid);
        const detail::Panel right = detail::gk15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    QuadResult out;
    out.intervals = heap.size();
    while (!heap.empty()) {
        out.value += heap.top().value;
        out.abs_error += heap.top().error;
        heap.pop();
    }
    out.converged = out.abs_error <= abs_tol;
    return out;
}

}  // namespace unobs_lab

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace unobs_lab {

/// Dense symmetric matrix stored as its packed lower triangle, so symmetry
/// holds by construction. Dimension is capped at `MaxDim`.
template <std::size_t MaxDim = 64>
class BasicSymMatrix {
public:
    static constexpr std::size_t max_dim = MaxDim;

    BasicSymMatrix() = default;

    explicit BasicSymMatrix(std::size_t n, double fill = 0.0) : n_(n) {
        if (n == 0 || n > MaxDim) {
            throw std::length_error("SymMatrix dimension " + std::to_string(n) +
                                    " outside [1, " + std::to_string(MaxDim) + "]");
        }
        data_.assign(n * (n + 1) / 2, fill);
    }

    static BasicSymMatrix identity(std::size_t n) {
        BasicSymMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1.0);
        return m;
    }

    static BasicSymMatrix ones(std::size_t n) { return BasicSymMatrix(n, 1.0); }

    /// Symmetrizes `a` from its lower triangle.
    static BasicSymMatrix from_dense(const Eigen::MatrixXd& a) {
        if (a.rows() != a.cols()) throw std::invalid_argument("from_dense: matrix not square");
        BasicSymMatrix m(static_cast<std::size_t>(a.rows()));
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j <= i; ++j)
                m.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), a(i, j));
        return m;
    }

    [[nodiscard]] std::size_t dim() const noexcept { return n_; }

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
        return data_[index(i, j)];
    }

    void set(std::size_t i, std::size_t j, double v) { data_[index(i, j)] = v; }

    [[nodiscard]] Eigen::MatrixXd to_dense() const {
        const auto n = static_cast<Eigen::Index>(n_);
        Eigen::MatrixXd a(n, n);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = (*this)(i, j);
                a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
            }
        return a;
    }

    /// Eigenvalues in ascending order.
    [[nodiscard]] Eigen::VectorXd eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(), Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

    /// Row-major flattening of the full matrix.
    [[nodiscard]] std::vector<double> row_major() const {
        std::vector<double> out;
        out.reserve(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) out.push_back((*this)(i, j));
        return out;
    }

    friend bool operator==(const BasicSymMatrix&, const BasicSymMatrix&) = default;

private:
    [[nodiscard]] std::size_t index(std::size_t i, std::size_t j) const {
        if (i >= n_ || j >= n_) throw std::out_of_range("SymMatrix index out of range");
        if (i < j) std::swap(i, j);
        return i * (i + 1) / 2 + j;
    }

    std::size_t n_ = 0;
    std::vector<double> data_;
};

using SymMatrix = BasicSymMatrix<>;

}  // namespace unobs_lab

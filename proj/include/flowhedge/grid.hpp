#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flowhedge/error.hpp"

namespace flowhedge {

/// Uniform (t, q) grid on [0, T] x [-Q_max, Q_max].
struct GridSpec {
    double Q_max = 40.0;
    std::size_t n_q = 161;     ///< odd, so that q = 0 is a node
    std::size_t n_t = 100;     ///< stored time steps
    std::size_t substeps = 50; ///< implicit Euler steps per stored step

    double dq() const { return 2.0 * Q_max / static_cast<double>(n_q - 1); }
    /// Exactly antisymmetric about the centre node: q(n_q - 1 - j) == -q(j).
    double q(std::size_t j) const {
        const double c = static_cast<double>(center());
        return Q_max * (static_cast<double>(j) - c) / c;
    }
    std::size_t center() const { return n_q / 2; }
};

inline void validate(const GridSpec& g) {
    if (!(g.Q_max > 0.0)) throw InvalidParams("Q_max must be > 0");
    if (g.n_q < 3 || g.n_q % 2 == 0) throw InvalidParams("n_q must be odd and >= 3");
    if (g.n_t < 1) throw InvalidParams("n_t must be >= 1");
    if (g.substeps < 1) throw InvalidParams("substeps must be >= 1");
}

inline std::vector<double> q_nodes(const GridSpec& g) {
    std::vector<double> out(g.n_q);
    for (std::size_t j = 0; j < g.n_q; ++j) out[j] = g.q(j);
    return out;
}

inline std::vector<double> t_nodes(const GridSpec& g, double T) {
    std::vector<double> out(g.n_t + 1);
    for (std::size_t i = 0; i <= g.n_t; ++i)
        out[i] = T * static_cast<double>(i) / static_cast<double>(g.n_t);
    return out;
}

/// Row-major (time, inventory) table.
template <typename T>
class Table {
public:
    Table() = default;
    Table(std::size_t rows, std::size_t cols, T init = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, init) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    const std::vector<T>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// Tridiagonal system lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1] = rhs[j]
/// (lower[0] and upper[n-1] unused).
struct TridiagonalSystem {
    std::vector<double> lower, diag, upper, rhs;

    explicit TridiagonalSystem(std::size_t n = 0) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0) {}

    std::size_t size() const { return diag.size(); }

    /// Positive diagonal, non-positive off-diagonals, row diagonal dominance.
    bool is_m_matrix() const {
        const std::size_t n = size();
        for (std::size_t j = 0; j < n; ++j) {
            const double lo = j > 0 ? lower[j] : 0.0;
            const double up = j + 1 < n ? upper[j] : 0.0;
            if (!(diag[j] > 0.0) || lo > 0.0 || up > 0.0) return false;
            if (diag[j] < -(lo + up)) return false;
        }
        return true;
    }

    /// Thomas algorithm; stable for the diagonally dominant systems built here.
    std::vector<double> solve() const {
        const std::size_t n = size();
        std::vector<double> c(n), d(n), x(n);
        c[0] = n > 1 ? upper[0] / diag[0] : 0.0;
        d[0] = rhs[0] / diag[0];
        for (std::size_t j = 1; j < n; ++j) {
            const double m = diag[j] - lower[j] * c[j - 1];
            c[j] = j + 1 < n ? upper[j] / m : 0.0;
            d[j] = (rhs[j] - lower[j] * d[j - 1]) / m;
        }
        x[n - 1] = d[n - 1];
        for (std::size_t j = n - 1; j-- > 0;) x[j] = d[j] - c[j] * x[j + 1];
        return x;
    }
};

}  // namespace flowhedge

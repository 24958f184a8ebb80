#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"

namespace tgq {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVector = Eigen::VectorXcd;

/// Uniform one-dimensional grid.
///
/// Cell-centred grids place nodes at center + (k - (count-1)/2) * spacing and
/// are symmetric about the centre. Origin-aligned grids place nodes at
/// center + (k - count/2) * spacing, so that integer multiples of the spacing
/// are nodes; for even counts the extra node is the shared Nyquist point
/// -count/2 * spacing of the periodic grid.
struct Grid1 {
    int count = 0;
    double spacing = 0.0;
    double center = 0.0;
    bool origin_aligned = false;

    static Grid1 cell_centered(int count, double lo, double hi) {
        return {count, (hi - lo) / count, 0.5 * (lo + hi), false};
    }
    static Grid1 aligned(int count, double spacing, double center = 0.0) { return {count, spacing, center, true}; }

    double offset() const { return origin_aligned ? static_cast<double>(count / 2) : 0.5 * (count - 1); }
    double node(int k) const { return center + (k - offset()) * spacing; }
    /// Length of the periodic cell spanned by the grid.
    double period() const { return count * spacing; }
    double lo() const { return center - 0.5 * period(); }
    double hi() const { return center + 0.5 * period(); }
    /// Largest |node - center| reachable by the band of the grid.
    double half_extent() const { return 0.5 * period(); }

    bool operator==(const Grid1& o) const {
        return count == o.count && spacing == o.spacing && center == o.center && origin_aligned == o.origin_aligned;
    }
};

/// Tensor product of one-dimensional grids, flattened row-major (last axis fastest).
template <int D>
struct ProductGrid {
    std::array<Grid1, D> axes;

    int size() const {
        int n = 1;
        for (const auto& a : axes) n *= a.count;
        return n;
    }
    std::array<int, D> unflatten(int flat) const {
        std::array<int, D> idx{};
        for (int a = D - 1; a >= 0; --a) {
            idx[a] = flat % axes[a].count;
            flat /= axes[a].count;
        }
        return idx;
    }
    int flatten(const std::array<int, D>& idx) const {
        int f = 0;
        for (int a = 0; a < D; ++a) f = f * axes[a].count + idx[a];
        return f;
    }
    Vec<D> node(int flat) const {
        const auto idx = unflatten(flat);
        Vec<D> v;
        for (int a = 0; a < D; ++a) v[a] = axes[a].node(idx[a]);
        return v;
    }
    double cell_volume() const {
        double v = 1.0;
        for (const auto& a : axes) v *= a.spacing;
        return v;
    }
    bool operator==(const ProductGrid& o) const { return axes == o.axes; }
};

template <int D>
ProductGrid<D> uniform_grid(int count, const Vec<D>& lo, const Vec<D>& hi) {
    ProductGrid<D> g;
    for (int a = 0; a < D; ++a) g.axes[a] = Grid1::cell_centered(count, lo[a], hi[a]);
    return g;
}

/// Momentum grid symmetric about zero with the given half-width per axis.
template <int D>
ProductGrid<D> momentum_grid(int count, double p_max) {
    ProductGrid<D> g;
    for (int a = 0; a < D; ++a) g.axes[a] = Grid1::cell_centered(count, -p_max, p_max);
    return g;
}

/// Tangent-fibre grid reciprocal to a momentum grid: dX * dp = 2 pi / count.
template <int D>
ProductGrid<D> fiber_grid_for(const ProductGrid<D>& p_grid) {
    ProductGrid<D> g;
    for (int a = 0; a < D; ++a) {
        const Grid1& p = p_grid.axes[a];
        g.axes[a] = Grid1::aligned(p.count, 2.0 * std::numbers::pi / (p.count * p.spacing));
    }
    return g;
}

/// Momentum grid reciprocal to a tangent-fibre grid.
template <int D>
ProductGrid<D> momentum_grid_for(const ProductGrid<D>& X_grid) {
    ProductGrid<D> g;
    for (int a = 0; a < D; ++a) {
        const Grid1& x = X_grid.axes[a];
        const double dp = 2.0 * std::numbers::pi / (x.count * x.spacing);
        g.axes[a] = Grid1{x.count, dp, 0.0, false};
    }
    return g;
}

/// Phase-space function a(q, p) sampled on q_grid x p_grid. Rows index q, columns index p.
template <int D>
struct SymbolGrid {
    ChartPtr<D> chart;
    ProductGrid<D> q_grid;
    ProductGrid<D> p_grid;
    CMatrix values;
    /// Fraction of the band kept by the last band-limit projection; 0 when none was applied.
    double band_limit = 0.0;

    void validate() const {
        for (int a = 0; a < D; ++a) {
            if (q_grid.axes[a].count < 8 || p_grid.axes[a].count < 8)
                throw ShapeError("symbol grids need at least 8 points per axis");
            if (p_grid.axes[a].center != 0.0 || p_grid.axes[a].origin_aligned)
                throw ShapeError("momentum grid must be symmetric about zero");
        }
        if (values.rows() != q_grid.size() || values.cols() != p_grid.size())
            throw ShapeError("symbol values do not match the grid shape");
    }
    SymbolGrid like(CMatrix v) const {
        SymbolGrid s = *this;
        s.values = std::move(v);
        return s;
    }
};

/// Function a(q, X) on the tangent bundle sampled on q_grid x X_grid.
template <int D>
struct FiberFunctionGrid {
    ChartPtr<D> chart;
    ProductGrid<D> q_grid;
    ProductGrid<D> X_grid;
    CMatrix values;
};

template <int D>
void require_same_grids(const SymbolGrid<D>& a, const SymbolGrid<D>& b) {
    if (!(a.q_grid == b.q_grid) || !(a.p_grid == b.p_grid)) throw ShapeError("symbols live on different grids");
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
        throw ShapeError("symbol value arrays differ in shape");
}

/// Samples a closure at every grid node.
template <int D>
SymbolGrid<D> sample_symbol(ChartPtr<D> chart, const std::function<cplx(const Vec<D>&, const Vec<D>&)>& a,
                            const ProductGrid<D>& q_grid, const ProductGrid<D>& p_grid) {
    SymbolGrid<D> s{std::move(chart), q_grid, p_grid, CMatrix(q_grid.size(), p_grid.size()), 0.0};
    for (int i = 0; i < q_grid.size(); ++i) {
        const Vec<D> q = q_grid.node(i);
        for (int k = 0; k < p_grid.size(); ++k) {
            const cplx v = a(q, p_grid.node(k));
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw SamplingError("symbol is not finite at q = " + format_point<D>(q) +
                                    ", p = " + format_point<D>(p_grid.node(k)));
            s.values(i, k) = v;
        }
    }
    s.validate();
    return s;
}

namespace detail {

/// Applies an (N x N) matrix along fibre axis `axis` of every row.
template <int D>
void apply_fiber_axis(CMatrix& data, const ProductGrid<D>& grid, int axis, const Eigen::MatrixXcd& M) {
    const int N = grid.axes[axis].count;
    if constexpr (D == 1) {
        data = (data * M.transpose()).eval();
    } else {
        const int N0 = grid.axes[0].count, N1 = grid.axes[1].count;
        if (axis == 1) {
            Eigen::Map<CMatrix> view(data.data(), data.rows() * N0, N1);
            view = (view * M.transpose()).eval();
        } else {
            for (Eigen::Index r = 0; r < data.rows(); ++r) {
                Eigen::Map<CMatrix> view(data.row(r).data(), N0, N1);
                view = (M * view).eval();
            }
        }
        (void)N;
    }
}

/// Applies an (N x N) matrix along q axis `axis` of the row index.
template <int D>
void apply_q_axis(CMatrix& data, const ProductGrid<D>& grid, int axis, const Eigen::MatrixXcd& M) {
    if constexpr (D == 1) {
        data = (M * data).eval();
    } else {
        const int N0 = grid.axes[0].count, N1 = grid.axes[1].count;
        const Eigen::Index C = data.cols();
        if (axis == 0) {
            Eigen::Map<CMatrix> view(data.data(), N0, N1 * C);
            view = (M * view).eval();
        } else {
            for (int i0 = 0; i0 < N0; ++i0) {
                auto block = data.middleRows(static_cast<Eigen::Index>(i0) * N1, N1);
                block = (M * block).eval();
            }
        }
    }
}

/// Matrix e^{-i p_k X_m} dX / (2 pi): samples in X to samples in p (one axis).
inline Eigen::MatrixXcd forward_matrix(const Grid1& X, const Grid1& p) {
    Eigen::MatrixXcd M(p.count, X.count);
    for (int k = 0; k < p.count; ++k)
        for (int m = 0; m < X.count; ++m)
            M(k, m) = std::polar(X.spacing / (2.0 * std::numbers::pi), -p.node(k) * X.node(m));
    return M;
}

/// Matrix e^{i p_k X_m} dp: samples in p to samples in X (one axis).
inline Eigen::MatrixXcd inverse_matrix(const Grid1& X, const Grid1& p) {
    Eigen::MatrixXcd M(X.count, p.count);
    for (int m = 0; m < X.count; ++m)
        for (int k = 0; k < p.count; ++k) M(m, k) = std::polar(p.spacing, p.node(k) * X.node(m));
    return M;
}

/// Angular frequencies of the periodic DFT on a grid; the Nyquist entry is -pi/spacing.
inline Eigen::VectorXd periodic_frequencies(const Grid1& g) {
    Eigen::VectorXd k(g.count);
    const double base = 2.0 * std::numbers::pi / g.period();
    for (int j = 0; j < g.count; ++j) k[j] = base * (j < (g.count + 1) / 2 ? j : j - g.count);
    return k;
}

inline Eigen::MatrixXcd dft_matrix(int N, int sign) {
    Eigen::MatrixXcd M(N, N);
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k)
            M(j, k) = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>((1LL * j * k) % N) / N);
    return M;
}

/// Projection onto periodic frequencies |kappa| <= frac * Nyquist along one q axis.
inline Eigen::MatrixXcd q_bandlimit_matrix(const Grid1& g, double frac) {
    const int N = g.count;
    const Eigen::VectorXd kap = periodic_frequencies(g);
    const double cut = frac * std::numbers::pi / g.spacing;
    Eigen::VectorXcd mask(N);
    for (int j = 0; j < N; ++j) mask[j] = (std::abs(kap[j]) <= cut && !(N % 2 == 0 && j == N / 2)) ? 1.0 : 0.0;
    return dft_matrix(N, +1) * mask.asDiagonal() * dft_matrix(N, -1) / static_cast<double>(N);
}

/// Spectral derivative along one periodic q axis; the Nyquist mode is dropped.
inline Eigen::MatrixXcd q_derivative_matrix(const Grid1& g) {
    const int N = g.count;
    const Eigen::VectorXd kap = periodic_frequencies(g);
    Eigen::VectorXcd mult(N);
    for (int j = 0; j < N; ++j) mult[j] = (N % 2 == 0 && j == N / 2) ? cplx(0.0) : cplx(0.0, kap[j]);
    return dft_matrix(N, +1) * mult.asDiagonal() * dft_matrix(N, -1) / static_cast<double>(N);
}

/// Projection onto fibre samples |X| <= frac * X_max along one momentum axis.
inline Eigen::MatrixXcd p_bandlimit_matrix(const Grid1& p, double frac) {
    const Grid1 X = Grid1::aligned(p.count, 2.0 * std::numbers::pi / (p.count * p.spacing));
    const double cut = frac * X.half_extent();
    Eigen::VectorXcd mask(p.count);
    for (int m = 0; m < p.count; ++m) mask[m] = std::abs(X.node(m)) <= cut * (1.0 + 1e-12) ? 1.0 : 0.0;
    if (p.count % 2 == 0) mask[0] = 0.0;
    return forward_matrix(X, p) * mask.asDiagonal() * inverse_matrix(X, p);
}

/// Spectral derivative d/dp along one momentum axis: multiplication by -iX in the fibre.
inline Eigen::MatrixXcd p_derivative_matrix(const Grid1& p) {
    const Grid1 X = Grid1::aligned(p.count, 2.0 * std::numbers::pi / (p.count * p.spacing));
    Eigen::VectorXcd mult(p.count);
    for (int m = 0; m < p.count; ++m) mult[m] = cplx(0.0, -X.node(m));
    if (p.count % 2 == 0) mult[0] = 0.0;
    return forward_matrix(X, p) * mult.asDiagonal() * inverse_matrix(X, p);
}

}  // namespace detail

/// Projects a symbol onto the band |X_a| <= frac * X_max,a in every fibre
/// direction and |kappa_a| <= frac * Nyquist in every q direction.
template <int D>
SymbolGrid<D> bandlimit(const SymbolGrid<D>& a, double frac = 2.0 / 3.0) {
    if (!(frac > 0.0 && frac < 1.0)) throw PreconditionError("band-limit fraction must lie in (0, 1)");
    SymbolGrid<D> out = a;
    for (int ax = 0; ax < D; ++ax)
        detail::apply_fiber_axis<D>(out.values, a.p_grid, ax, detail::p_bandlimit_matrix(a.p_grid.axes[ax], frac));
    for (int ax = 0; ax < D; ++ax)
        detail::apply_q_axis<D>(out.values, a.q_grid, ax, detail::q_bandlimit_matrix(a.q_grid.axes[ax], frac));
    out.band_limit = frac;
    return out;
}

/// Spectral partial derivative d a / d q^axis.
template <int D>
SymbolGrid<D> derivative_q(const SymbolGrid<D>& a, int axis) {
    SymbolGrid<D> out = a;
    detail::apply_q_axis<D>(out.values, a.q_grid, axis, detail::q_derivative_matrix(a.q_grid.axes[axis]));
    return out;
}

/// Spectral partial derivative d a / d p_axis.
template <int D>
SymbolGrid<D> derivative_p(const SymbolGrid<D>& a, int axis) {
    SymbolGrid<D> out = a;
    detail::apply_fiber_axis<D>(out.values, a.p_grid, axis, detail::p_derivative_matrix(a.p_grid.axes[axis]));
    return out;
}

/// Pointwise product of two symbols on the same grids.
template <int D>
SymbolGrid<D> multiply(const SymbolGrid<D>& a, const SymbolGrid<D>& b) {
    require_same_grids(a, b);
    return a.like(a.values.cwiseProduct(b.values));
}

/// Phase-space integral of a * b with measure dq dp (no density factor).
template <int D>
cplx phase_space_integral(const SymbolGrid<D>& a, const SymbolGrid<D>& b) {
    require_same_grids(a, b);
    return a.values.cwiseProduct(b.values).sum() * a.q_grid.cell_volume() * a.p_grid.cell_volume();
}

}  // namespace tgq

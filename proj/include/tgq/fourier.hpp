#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/grids.hpp"

namespace tgq {

namespace detail {

template <int D>
Eigen::VectorXd density_on(const MetricChart<D>& chart, const ProductGrid<D>& q_grid) {
    Eigen::VectorXd s(q_grid.size());
    for (int i = 0; i < q_grid.size(); ++i) s[i] = std::sqrt(chart.metric(q_grid.node(i)).determinant());
    return s;
}

template <int D>
void check_reciprocity(const ProductGrid<D>& X_grid, const ProductGrid<D>& p_grid) {
    for (int a = 0; a < D; ++a) {
        const Grid1& X = X_grid.axes[a];
        const Grid1& p = p_grid.axes[a];
        if (X.count != p.count) throw ShapeError("fibre and momentum grids differ in size");
        const double target = 2.0 * std::numbers::pi / X.count;
        if (std::abs(X.spacing * p.spacing - target) > 1e-12 * target)
            throw ShapeError("fibre and momentum spacings violate dX dp = 2 pi / N");
        if (!X.origin_aligned || X.center != 0.0) throw ShapeError("fibre grid must be origin-aligned");
        if (p.origin_aligned || p.center != 0.0) throw ShapeError("momentum grid must be symmetric");
    }
}

}  // namespace detail

/// Fibrewise Fourier transform (2 pi)^{-n} sum_X e^{-i p X} f(q, X) sqrt(g(q)) dX^n.
template <int D>
SymbolGrid<D> fiber_fourier(const FiberFunctionGrid<D>& f) {
    const ProductGrid<D> p_grid = momentum_grid_for(f.X_grid);
    detail::check_reciprocity(f.X_grid, p_grid);
    if (f.values.rows() != f.q_grid.size() || f.values.cols() != f.X_grid.size())
        throw ShapeError("fibre function values do not match the grid shape");
    CMatrix v = f.values;
    for (int a = 0; a < D; ++a)
        detail::apply_fiber_axis<D>(v, f.X_grid, a, detail::forward_matrix(f.X_grid.axes[a], p_grid.axes[a]));
    const Eigen::VectorXd s = detail::density_on(*f.chart, f.q_grid);
    v = s.asDiagonal() * v;
    return SymbolGrid<D>{f.chart, f.q_grid, p_grid, std::move(v), 0.0};
}

/// Inverse transform sum_p e^{i p X} a(q, p) dp^n / sqrt(g(q)).
template <int D>
FiberFunctionGrid<D> fiber_fourier_inverse(const SymbolGrid<D>& a) {
    const ProductGrid<D> X_grid = fiber_grid_for(a.p_grid);
    detail::check_reciprocity(X_grid, a.p_grid);
    if (a.values.rows() != a.q_grid.size() || a.values.cols() != a.p_grid.size())
        throw ShapeError("symbol values do not match the grid shape");
    CMatrix v = a.values;
    for (int ax = 0; ax < D; ++ax)
        detail::apply_fiber_axis<D>(v, a.p_grid, ax, detail::inverse_matrix(X_grid.axes[ax], a.p_grid.axes[ax]));
    const Eigen::VectorXd s = detail::density_on(*a.chart, a.q_grid);
    v = s.cwiseInverse().asDiagonal() * v;
    return FiberFunctionGrid<D>{a.chart, a.q_grid, X_grid, std::move(v)};
}

/// Fibrewise convolution sum_Y f1(q, Y) f2(q, X - Y) sqrt(g(q)) dY^n.
///
/// Differences X - Y falling outside the grid are wrapped into it with the
/// sign (-1)^{N-1} per wrap, which is the periodicity of trigonometric
/// polynomials in the symmetric momentum grid. With this rule
/// F(f1 * f2) = (2 pi)^n F(f1) F(f2) holds exactly on the grid.
template <int D>
FiberFunctionGrid<D> fiber_convolution(const FiberFunctionGrid<D>& f1, const FiberFunctionGrid<D>& f2) {
    if (!(f1.q_grid == f2.q_grid) || !(f1.X_grid == f2.X_grid)) throw ShapeError("convolution grids differ");
    if (f1.values.rows() != f2.values.rows() || f1.values.cols() != f2.values.cols())
        throw ShapeError("convolution value arrays differ in shape");
    const ProductGrid<D>& Xg = f1.X_grid;
    const int NX = Xg.size();
    const Eigen::VectorXd s = detail::density_on(*f1.chart, f1.q_grid);
    // For every pair (m, m') precompute the index and sign of X_m - X_m'.
    Eigen::MatrixXi idx(NX, NX);
    Eigen::MatrixXd sgn(NX, NX);
    for (int m = 0; m < NX; ++m) {
        const auto im = Xg.unflatten(m);
        for (int mp = 0; mp < NX; ++mp) {
            const auto imp = Xg.unflatten(mp);
            std::array<int, D> j{};
            double sign = 1.0;
            for (int a = 0; a < D; ++a) {
                const int N = Xg.axes[a].count;
                const int off = static_cast<int>(Xg.axes[a].offset());
                int t = im[a] - imp[a] + off;
                while (t < 0) {
                    t += N;
                    if (N % 2 == 0) sign = -sign;
                }
                while (t >= N) {
                    t -= N;
                    if (N % 2 == 0) sign = -sign;
                }
                j[a] = t;
            }
            idx(m, mp) = Xg.flatten(j);
            sgn(m, mp) = sign;
        }
    }
    CMatrix out(f1.values.rows(), NX);
    const double w = Xg.cell_volume();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        for (int m = 0; m < NX; ++m) {
            cplx acc = 0.0;
            for (int mp = 0; mp < NX; ++mp) acc += f1.values(r, mp) * f2.values(r, idx(m, mp)) * sgn(m, mp);
            out(r, m) = acc * s[r] * w;
        }
    }
    return FiberFunctionGrid<D>{f1.chart, f1.q_grid, Xg, std::move(out)};
}

}  // namespace tgq

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/grids.hpp"

namespace tgq {

/// C-infinity step: 1 for |u| <= start, 0 for |u| >= end.
inline double smooth_taper(double u, double start, double end) {
    const double t = (std::abs(u) - start) / (end - start);
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / (1.0 - t)), b = std::exp(-1.0 / t);
    return a / (a + b);
}

/// Gaussian window with tapered tails, centred at `center` in q and at 0 in p.
/// Taper positions are fractions of the grid half-widths. A zero sigma drops
/// the Gaussian factor in that variable, leaving only the taper.
template <int D>
struct Window {
    Vec<D> center = Vec<D>::Zero();
    double sigma_q = 1.2;
    double sigma_p = 1.2;
    double q_taper_start = 0.375;
    double q_taper_end = 0.97;
    double p_taper_start = 0.375;
    double p_taper_end = 0.97;
    Vec<D> q_half = Vec<D>::Constant(4.0);
    Vec<D> p_half = Vec<D>::Constant(4.0);

    double operator()(const Vec<D>& q, const Vec<D>& p) const {
        double e = 0.0, t = 1.0;
        for (int a = 0; a < D; ++a) {
            const double u = q[a] - center[a];
            if (sigma_q > 0.0) e += u * u / (2.0 * sigma_q * sigma_q);
            if (sigma_p > 0.0) e += p[a] * p[a] / (2.0 * sigma_p * sigma_p);
            t *= smooth_taper(u, q_taper_start * q_half[a], q_taper_end * q_half[a]);
            t *= smooth_taper(p[a], p_taper_start * p_half[a], p_taper_end * p_half[a]);
        }
        return std::exp(-e) * t;
    }
};

template <int D>
Window<D> window_for(const ProductGrid<D>& q_grid, const ProductGrid<D>& p_grid, double sigma_q, double sigma_p) {
    Window<D> w;
    w.sigma_q = sigma_q;
    w.sigma_p = sigma_p;
    for (int a = 0; a < D; ++a) {
        w.center[a] = q_grid.axes[a].center;
        w.q_half[a] = q_grid.axes[a].half_extent();
        w.p_half[a] = p_grid.axes[a].half_extent();
    }
    return w;
}

/// Windowed coordinate pair f1 = (q^1 - c^1 + offset) w, f2 = (p_1 + offset) w, band-limited.
/// A non-zero offset gives the pair a non-vanishing phase-space overlap.
template <int D>
std::pair<SymbolGrid<D>, SymbolGrid<D>> canonical_pair(ChartPtr<D> chart, const ProductGrid<D>& q_grid,
                                                       const ProductGrid<D>& p_grid, const Window<D>& w,
                                                       double offset = 0.0, double band = 2.0 / 3.0) {
    auto f1 = sample_symbol<D>(
        chart, [&](const Vec<D>& q, const Vec<D>& p) { return cplx((q[0] - w.center[0] + offset) * w(q, p)); },
        q_grid, p_grid);
    auto f2 = sample_symbol<D>(
        chart, [&](const Vec<D>& q, const Vec<D>& p) { return cplx((p[0] + offset) * w(q, p)); }, q_grid, p_grid);
    return {bandlimit(f1, band), bandlimit(f2, band)};
}

/// Windowed product (q^1 - c^1) p_1 w, band-limited.
template <int D>
SymbolGrid<D> windowed_qp(ChartPtr<D> chart, const ProductGrid<D>& q_grid, const ProductGrid<D>& p_grid,
                          const Window<D>& w, double band = 2.0 / 3.0) {
    return bandlimit(sample_symbol<D>(
                         chart,
                         [&](const Vec<D>& q, const Vec<D>& p) { return cplx((q[0] - w.center[0]) * p[0] * w(q, p)); },
                         q_grid, p_grid),
                     band);
}

/// Seeded random real symbol: i.i.d. normal samples projected onto the band.
template <int D>
SymbolGrid<D> random_symbol(ChartPtr<D> chart, const ProductGrid<D>& q_grid, const ProductGrid<D>& p_grid,
                            std::uint64_t seed, double band = 2.0 / 3.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    SymbolGrid<D> s{std::move(chart), q_grid, p_grid, CMatrix(q_grid.size(), p_grid.size()), 0.0};
    for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = nd(rng);
    s.validate();
    SymbolGrid<D> out = bandlimit(s, band);
    out.values = out.values.real().template cast<cplx>();
    return out;
}

/// Sign convention of the canonical bracket.
enum class BracketConvention {
    /// sum_k (d_q f1 d_p f2 - d_p f1 d_q f2), so that {q, p} = 1.
    q_first,
    /// sum_k (d_p f1 d_q f2 - d_q f1 d_p f2), so that {p, q} = 1.
    p_first,
};

inline std::string to_string(BracketConvention c) { return c == BracketConvention::q_first ? "q_first" : "p_first"; }

inline BracketConvention bracket_convention_from_string(const std::string& s) {
    if (s == "q_first") return BracketConvention::q_first;
    if (s == "p_first") return BracketConvention::p_first;
    throw PreconditionError("unknown bracket convention '" + s + "'");
}

/// Canonical Poisson bracket on T*M with spectral derivatives.
template <int D>
SymbolGrid<D> poisson_bracket(const SymbolGrid<D>& f1, const SymbolGrid<D>& f2,
                              BracketConvention conv = BracketConvention::q_first) {
    require_same_grids(f1, f2);
    CMatrix out = CMatrix::Zero(f1.values.rows(), f1.values.cols());
    for (int k = 0; k < D; ++k) {
        const CMatrix a = derivative_q(f1, k).values.cwiseProduct(derivative_p(f2, k).values);
        const CMatrix b = derivative_p(f1, k).values.cwiseProduct(derivative_q(f2, k).values);
        out += conv == BracketConvention::q_first ? CMatrix(a - b) : CMatrix(b - a);
    }
    SymbolGrid<D> r = f1.like(std::move(out));
    r.band_limit = 0.0;
    return r;
}

}  // namespace tgq

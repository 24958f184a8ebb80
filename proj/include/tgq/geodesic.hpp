#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"

namespace tgq {

/// Step policy of the fixed-step fourth-order geodesic integrator.
///
/// The number of steps for a flow of parameter s with initial velocity V is
/// max(min_steps, ceil(steps_per_unit * |s| * |V|_g)), i.e. it is counted per
/// unit of arc length. Two flows with the same arc length therefore use the
/// same steps, which keeps gamma_{q,tX}(s) and gamma_{q,X}(ts) identical up to
/// rounding.
struct GeodesicOptions {
    int steps_per_unit = 64;
    int min_steps = 8;
    int newton_max_iter = 50;
    /// When positive, every flow uses exactly this many steps, which keeps the
    /// discrete flow map smooth in its initial data.
    int fixed_steps = 0;
};

template <int D>
struct TangentPoint {
    Vec<D> q;
    Vec<D> X;
};

template <int D>
struct GeodesicSample {
    double s;
    Vec<D> position;
    Vec<D> velocity;
};

template <int D>
struct GeodesicPath {
    TangentPoint<D> base;
    std::vector<GeodesicSample<D>> samples;
    int integrator_steps = 0;

    const GeodesicSample<D>& end() const { return samples.back(); }
};

/// Jacobi fields of the geodesic flow: h = dx/dq and h_tilde = dx/dX at
/// x = gamma_{q,X}(s).
template <int D>
struct JacobiData {
    Mat<D> h;
    Mat<D> h_tilde;
    double s = 0.0;
};

namespace detail {

template <int D>
int flow_steps(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& V, double s,
               const GeodesicOptions& opt) {
    if (opt.fixed_steps > 0) return opt.fixed_steps;
    const double arc = std::abs(s) * metric_norm(chart, q, V);
    const double n = std::ceil(opt.steps_per_unit * arc);
    return std::max(opt.min_steps, static_cast<int>(std::min(n, 1e7)));
}

template <int D>
struct FlowState {
    Vec<D> x;
    Vec<D> v;
    Eigen::Matrix<double, D, 2 * D> jx;
    Eigen::Matrix<double, D, 2 * D> jv;
};

template <int D>
Vec<D> geodesic_acceleration(const Christoffel<D>& gamma, const Vec<D>& v) {
    Vec<D> a;
    for (int k = 0; k < D; ++k) a[k] = -v.dot(gamma[k] * v);
    return a;
}

template <int D, bool WithVariations>
FlowState<D> flow_rhs(const MetricChart<D>& chart, const FlowState<D>& s) {
    FlowState<D> d;
    d.x = s.v;
    if constexpr (WithVariations) {
        const Connection<D> c = connection_at(chart, s.x);
        d.v = geodesic_acceleration<D>(c.gamma, s.v);
        Mat<D> A, B;
        for (int k = 0; k < D; ++k) {
            for (int m = 0; m < D; ++m) A(k, m) = s.v.dot(c.dgamma[m][k] * s.v);
            B.row(k) = 2.0 * (c.gamma[k] * s.v).transpose();
        }
        d.jx = s.jv;
        d.jv = -A * s.jx - B * s.jv;
    } else {
        const Mat<D> g = chart.metric(s.x);
        const Christoffel<D> gamma = christoffel_from<D>(g.inverse(), chart.metric_grad(s.x));
        d.v = geodesic_acceleration<D>(gamma, s.v);
    }
    return d;
}

template <int D, bool WithVariations>
FlowState<D> axpy(const FlowState<D>& a, double h, const FlowState<D>& k) {
    FlowState<D> r;
    r.x = a.x + h * k.x;
    r.v = a.v + h * k.v;
    if constexpr (WithVariations) {
        r.jx = a.jx + h * k.jx;
        r.jv = a.jv + h * k.jv;
    }
    return r;
}

/// Classical RK4 on the geodesic equation, optionally with its variational
/// equations. Integrating both with the same scheme makes the variations the
/// exact derivative of the discrete flow map.
template <int D, bool WithVariations>
FlowState<D> integrate(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& V, double s, int steps,
                       std::vector<GeodesicSample<D>>* samples = nullptr) {
    FlowState<D> st;
    st.x = q;
    st.v = V;
    if constexpr (WithVariations) {
        st.jx.setZero();
        st.jv.setZero();
        st.jx.template leftCols<D>().setIdentity();
        st.jv.template rightCols<D>().setIdentity();
    }
    if (samples) samples->push_back({0.0, st.x, st.v});
    const double h = s / steps;
    for (int n = 0; n < steps; ++n) {
        const FlowState<D> k1 = flow_rhs<D, WithVariations>(chart, st);
        const FlowState<D> k2 = flow_rhs<D, WithVariations>(chart, axpy<D, WithVariations>(st, 0.5 * h, k1));
        const FlowState<D> k3 = flow_rhs<D, WithVariations>(chart, axpy<D, WithVariations>(st, 0.5 * h, k2));
        const FlowState<D> k4 = flow_rhs<D, WithVariations>(chart, axpy<D, WithVariations>(st, h, k3));
        st.x += (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
        st.v += (h / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
        if constexpr (WithVariations) {
            st.jx += (h / 6.0) * (k1.jx + 2.0 * k2.jx + 2.0 * k3.jx + k4.jx);
            st.jv += (h / 6.0) * (k1.jv + 2.0 * k2.jv + 2.0 * k3.jv + k4.jv);
        }
        if (!chart.domain.contains(st.x)) {
            throw ExcursionError("geodesic from " + format_point<D>(q) + " left the domain of chart '" +
                                     chart.name + "'",
                                 n * h);
        }
        if (samples) samples->push_back({(n + 1) * h, st.x, st.v});
    }
    return st;
}

/// Endpoint of gamma_{q,V}(s) together with h = dx/dq and h_tilde = dx/dV.
template <int D>
struct FlowEnd {
    Vec<D> x;
    Mat<D> h;
    Mat<D> h_tilde;
};

template <int D>
FlowEnd<D> flow_end(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& V, double s,
                    const GeodesicOptions& opt) {
    FlowEnd<D> r;
    if (s == 0.0) {
        r.x = q;
        r.h.setIdentity();
        r.h_tilde.setZero();
        return r;
    }
    const int steps = flow_steps(chart, q, V, s, opt);
    const FlowState<D> st = integrate<D, true>(chart, q, V, s, steps);
    r.x = st.x;
    r.h = st.jx.template leftCols<D>();
    r.h_tilde = st.jx.template rightCols<D>();
    return r;
}

template <int D>
Vec<D> flow_point(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& V, double s,
                  const GeodesicOptions& opt) {
    if (s == 0.0) return q;
    const int steps = flow_steps(chart, q, V, s, opt);
    return integrate<D, false>(chart, q, V, s, steps).x;
}

template <int D>
void require_injective(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& V, const char* what) {
    const double n = metric_norm(chart, q, V);
    if (!(n < chart.injectivity_floor)) {
        throw InjectivityError(std::string(what) + ": tangent vector norm " + std::to_string(n) +
                               " is not below the injectivity floor " +
                               std::to_string(chart.injectivity_floor) + " of chart '" + chart.name + "'");
    }
}

/// Jacobian of (q, X) -> (exp_q(t phi1 X), exp_q(t phi2 X)) normalised by
/// |det t(phi1 - phi2)| and by the volume densities, so that it equals 1 on
/// a flat chart.
template <int D>
double jacobian_general(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& X, const Mat<D>& phi1,
                        const Mat<D>& phi2, double t, const GeodesicOptions& opt) {
    if (t == 0.0) return 1.0;
    const FlowEnd<D> a = flow_end(chart, q, Vec<D>(phi1 * X), t, opt);
    const FlowEnd<D> b = flow_end(chart, q, Vec<D>(phi2 * X), t, opt);
    Eigen::Matrix<double, 2 * D, 2 * D> M;
    M.template topLeftCorner<D, D>() = a.h;
    M.template topRightCorner<D, D>() = a.h_tilde * phi1;
    M.template bottomLeftCorner<D, D>() = b.h;
    M.template bottomRightCorner<D, D>() = b.h_tilde * phi2;
    const double norm = std::abs((t * (phi1 - phi2)).determinant());
    const double gx = chart.metric(a.x).determinant();
    const double gy = chart.metric(b.x).determinant();
    const double gq = chart.metric(q).determinant();
    return std::abs(M.determinant()) / norm * std::sqrt(gx * gy) / gq;
}

}  // namespace detail

/// Integrates the geodesic from `start` up to parameter s with a fixed number of RK4 steps.
template <int D>
GeodesicPath<D> geodesic_flow(const MetricChart<D>& chart, const TangentPoint<D>& start, double s, int steps) {
    chart.require_inside(start.q);
    if (steps < 1) throw PreconditionError("geodesic_flow needs at least one step");
    GeodesicPath<D> path;
    path.base = start;
    path.integrator_steps = steps;
    path.samples.reserve(steps + 1);
    detail::integrate<D, false>(chart, start.q, start.X, s, steps, &path.samples);
    return path;
}

/// Same, with the step count chosen by the step policy.
template <int D>
GeodesicPath<D> geodesic_flow(const MetricChart<D>& chart, const TangentPoint<D>& start, double s,
                              const GeodesicOptions& opt = {}) {
    chart.require_inside(start.q);
    return geodesic_flow(chart, start, s, detail::flow_steps(chart, start.q, start.X, s, opt));
}

template <int D>
Vec<D> exp_map(const MetricChart<D>& chart, const TangentPoint<D>& p, const GeodesicOptions& opt = {}) {
    chart.require_inside(p.q);
    detail::require_injective(chart, p.q, p.X, "exp_map");
    return detail::flow_point(chart, p.q, p.X, 1.0, opt);
}

template <int D>
JacobiData<D> jacobi_fields(const MetricChart<D>& chart, const TangentPoint<D>& p, double s,
                            const GeodesicOptions& opt = {}) {
    chart.require_inside(p.q);
    const detail::FlowEnd<D> e = detail::flow_end(chart, p.q, p.X, s, opt);
    return {e.h, e.h_tilde, s};
}

/// Inverse of exp_q by Newton iteration on the endpoint residual, started at
/// the coordinate difference x - q and using h_tilde as the Jacobian.
template <int D>
Vec<D> log_map(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& x, const GeodesicOptions& opt = {}) {
    chart.require_inside(q);
    chart.require_inside(x);
    Vec<D> X = x - q;
    if (X.isZero(0.0)) return Vec<D>::Zero();
    const double scale = 1.0 + X.norm();
    double res = 0.0;
    for (int it = 0; it < opt.newton_max_iter; ++it) {
        if (!(metric_norm(chart, q, X) < 2.0 * chart.injectivity_floor))
            throw InjectivityError("log_map: point " + format_point<D>(x) + " is too far from " +
                                   format_point<D>(q));
        const detail::FlowEnd<D> e = detail::flow_end(chart, q, X, 1.0, opt);
        const Vec<D> r = e.x - x;
        res = r.norm();
        const Vec<D> dX = e.h_tilde.partialPivLu().solve(r);
        X -= dX;
        if (dX.norm() <= 1e-15 * scale || res <= 1e-15 * scale) break;
    }
    res = (detail::flow_point(chart, q, X, 1.0, opt) - x).norm();
    if (!(res <= 1e-10)) throw ConvergenceError("log_map: Newton residual " + std::to_string(res));
    detail::require_injective(chart, q, X, "log_map");
    return X;
}

/// Normalised Jacobian J(q, X; s) of (q, X) -> (gamma_{q,X}(s), gamma_{q,X}(-s)).
template <int D>
double jacobian_J(const MetricChart<D>& chart, const TangentPoint<D>& p, double s, const GeodesicOptions& opt = {}) {
    chart.require_inside(p.q);
    if (s == 0.0) return 1.0;
    const double J = detail::jacobian_general(chart, p.q, p.X, Mat<D>(Mat<D>::Identity()), Mat<D>(-Mat<D>::Identity()), s, opt);
    if (!(J > 0.0) || !std::isfinite(J))
        throw ConvergenceError("jacobian_J: degenerate Jacobian at " + format_point<D>(p.q));
    return J;
}

}  // namespace tgq

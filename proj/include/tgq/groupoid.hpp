#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/geodesic.hpp"

namespace tgq {

/// Point pair (x, y) at deformation parameter hbar > 0.
template <int D>
struct Interior {
    Vec<D> x;
    Vec<D> y;
    double hbar;
};

/// Tangent vector X at q: the hbar = 0 stratum.
template <int D>
struct Boundary {
    Vec<D> q;
    Vec<D> X;
};

template <int D>
using GroupoidElement = std::variant<Interior<D>, Boundary<D>>;

template <int D>
Interior<D> make_interior(const Vec<D>& x, const Vec<D>& y, double hbar, double hbar0 = 1.0) {
    if (!(hbar > 0.0 && hbar <= hbar0))
        throw PreconditionError("interior element needs 0 < hbar <= " + std::to_string(hbar0) + ", got " +
                                std::to_string(hbar));
    return {x, y, hbar};
}

template <int D>
bool is_interior(const GroupoidElement<D>& g) {
    return std::holds_alternative<Interior<D>>(g);
}

template <int D>
GroupoidElement<D> inverse(const GroupoidElement<D>& g) {
    if (const auto* i = std::get_if<Interior<D>>(&g)) return Interior<D>{i->y, i->x, i->hbar};
    const auto& b = std::get<Boundary<D>>(g);
    return Boundary<D>{b.q, Vec<D>(-b.X)};
}

template <int D>
GroupoidElement<D> range(const GroupoidElement<D>& g) {
    if (const auto* i = std::get_if<Interior<D>>(&g)) return Interior<D>{i->x, i->x, i->hbar};
    return Boundary<D>{std::get<Boundary<D>>(g).q, Vec<D>::Zero()};
}

template <int D>
GroupoidElement<D> source(const GroupoidElement<D>& g) {
    if (const auto* i = std::get_if<Interior<D>>(&g)) return Interior<D>{i->y, i->y, i->hbar};
    return Boundary<D>{std::get<Boundary<D>>(g).q, Vec<D>::Zero()};
}

template <int D>
bool is_unit(const GroupoidElement<D>& g) {
    if (const auto* i = std::get_if<Interior<D>>(&g)) return i->x == i->y;
    return std::get<Boundary<D>>(g).X.isZero(0.0);
}

/// Componentwise comparison; tol = 0 requests bitwise equality of coordinates.
template <int D>
bool same_element(const GroupoidElement<D>& a, const GroupoidElement<D>& b, double tol = 0.0) {
    if (a.index() != b.index()) return false;
    if (const auto* i = std::get_if<Interior<D>>(&a)) {
        const auto& j = std::get<Interior<D>>(b);
        return i->hbar == j.hbar && (i->x - j.x).cwiseAbs().maxCoeff() <= tol &&
               (i->y - j.y).cwiseAbs().maxCoeff() <= tol;
    }
    const auto& p = std::get<Boundary<D>>(a);
    const auto& q = std::get<Boundary<D>>(b);
    return (p.q - q.q).cwiseAbs().maxCoeff() <= tol && (p.X - q.X).cwiseAbs().maxCoeff() <= tol;
}

/// Groupoid product g . h, defined when s(g) = r(h).
template <int D>
GroupoidElement<D> compose(const GroupoidElement<D>& g, const GroupoidElement<D>& h, double base_tol = 1e-12) {
    if (g.index() != h.index())
        throw ComposabilityError("compose: elements lie in different strata (interior vs boundary)");
    if (const auto* a = std::get_if<Interior<D>>(&g)) {
        const auto& b = std::get<Interior<D>>(h);
        if (a->hbar != b.hbar)
            throw ComposabilityError("compose: hbar mismatch (" + std::to_string(a->hbar) + " vs " +
                                     std::to_string(b.hbar) + ")");
        if ((a->y - b.x).cwiseAbs().maxCoeff() > base_tol)
            throw ComposabilityError("compose: source of the first element " + format_point<D>(a->y) +
                                     " differs from range of the second " + format_point<D>(b.x));
        return Interior<D>{a->x, b.y, a->hbar};
    }
    const auto& a = std::get<Boundary<D>>(g);
    const auto& b = std::get<Boundary<D>>(h);
    if ((a.q - b.q).cwiseAbs().maxCoeff() > base_tol)
        throw ComposabilityError("compose: base points " + format_point<D>(a.q) + " and " + format_point<D>(b.q) +
                                 " differ");
    return Boundary<D>{a.q, Vec<D>(a.X + b.X)};
}

/// Constant fibre endomorphisms identifying the normal bundle of the diagonal
/// with the tangent bundle: x = exp_q(hbar phi1 X), y = exp_q(hbar phi2 X).
template <int D>
struct Identification {
    Mat<D> phi1 = 0.5 * Mat<D>::Identity();
    Mat<D> phi2 = -0.5 * Mat<D>::Identity();

    static Identification moyal() { return {}; }
    static Identification connes() { return {Mat<D>::Zero(), Mat<D>(-Mat<D>::Identity())}; }
    static Identification scalar(double p1, double p2) {
        return {Mat<D>(p1 * Mat<D>::Identity()), Mat<D>(p2 * Mat<D>::Identity())};
    }
};

/// Chart of the tangent groupoid: (q, X, hbar) -> (exp_q(hbar phi1 X), exp_q(hbar phi2 X), hbar),
/// and (q, X, 0) -> (q, X).
template <int D>
GroupoidElement<D> phi_chart(const MetricChart<D>& chart, const TangentPoint<D>& p, double hbar,
                             const Identification<D>& id = {}, const GeodesicOptions& opt = {},
                             double hbar0 = 1.0) {
    chart.require_inside(p.q);
    if (!(hbar >= 0.0 && hbar <= hbar0))
        throw PreconditionError("phi_chart: hbar must lie in [0, " + std::to_string(hbar0) + "]");
    if (hbar == 0.0) return Boundary<D>{p.q, p.X};
    const Vec<D> V1 = id.phi1 * p.X, V2 = id.phi2 * p.X;
    detail::require_injective(chart, p.q, Vec<D>(hbar * V1), "phi_chart");
    detail::require_injective(chart, p.q, Vec<D>(hbar * V2), "phi_chart");
    return Interior<D>{detail::flow_point(chart, p.q, V1, hbar, opt), detail::flow_point(chart, p.q, V2, hbar, opt),
                       hbar};
}

namespace detail {

/// Newton solve behind phi_inverse. When `jac` is given it receives the
/// normalised Jacobian of phi_chart at the solution, read off the last Newton matrix.
template <int D>
TangentPoint<D> phi_inverse_solve(const MetricChart<D>& chart, const Interior<D>& g, const Identification<D>& id,
                                  const GeodesicOptions& opt, double* jac) {
    chart.require_inside(g.x);
    chart.require_inside(g.y);
    if (!(g.hbar > 0.0)) throw PreconditionError("phi_inverse: hbar must be positive");
    const double hb = g.hbar;
    const Mat<D> A = id.phi1 - id.phi2;
    Vec<D> X = A.partialPivLu().solve(Vec<D>((g.x - g.y) / hb));
    Vec<D> q = g.x - hb * id.phi1 * X;
    if (g.x == g.y) {
        if (jac) *jac = 1.0;
        return {q, Vec<D>::Zero()};
    }
    const double scale = 1.0 + g.x.norm() + g.y.norm();
    using Vec2 = Eigen::Matrix<double, 2 * D, 1>;
    using Mat2 = Eigen::Matrix<double, 2 * D, 2 * D>;
    double res = std::numeric_limits<double>::infinity();
    double det_M = 0.0;
    for (int it = 0; it < opt.newton_max_iter; ++it) {
        if (!chart.domain.contains(q))
            throw DomainError("phi_inverse: base point iterate " + format_point<D>(q) + " left the chart domain");
        const double sep = std::max(metric_norm(chart, q, Vec<D>(hb * id.phi1 * X)),
                                    metric_norm(chart, q, Vec<D>(hb * id.phi2 * X)));
        if (!(sep < 2.0 * chart.injectivity_floor))
            throw InjectivityError("phi_inverse: points " + format_point<D>(g.x) + " and " + format_point<D>(g.y) +
                                   " are too far apart");
        const detail::FlowEnd<D> a = detail::flow_end(chart, q, Vec<D>(id.phi1 * X), hb, opt);
        const detail::FlowEnd<D> b = detail::flow_end(chart, q, Vec<D>(id.phi2 * X), hb, opt);
        Vec2 r;
        r.template head<D>() = a.x - g.x;
        r.template tail<D>() = b.x - g.y;
        res = r.norm();
        Mat2 M;
        M.template topLeftCorner<D, D>() = a.h;
        M.template topRightCorner<D, D>() = a.h_tilde * id.phi1;
        M.template bottomLeftCorner<D, D>() = b.h;
        M.template bottomRightCorner<D, D>() = b.h_tilde * id.phi2;
        const auto lu = M.partialPivLu();
        det_M = lu.determinant();
        const Vec2 dz = lu.solve(r);
        q -= dz.template head<D>();
        X -= dz.template tail<D>();
        const double step = dz.template head<D>().norm() + hb * dz.template tail<D>().norm();
        if (step <= 1e-15 * scale || res == 0.0) break;
    }
    {
        const Vec<D> xa = detail::flow_point(chart, q, Vec<D>(id.phi1 * X), hb, opt);
        const Vec<D> yb = detail::flow_point(chart, q, Vec<D>(id.phi2 * X), hb, opt);
        res = std::sqrt((xa - g.x).squaredNorm() + (yb - g.y).squaredNorm());
    }
    if (!(res <= 1e-9)) throw ConvergenceError("phi_inverse: Newton residual " + std::to_string(res));
    detail::require_injective(chart, q, Vec<D>(hb * id.phi1 * X), "phi_inverse");
    detail::require_injective(chart, q, Vec<D>(hb * id.phi2 * X), "phi_inverse");
    if (jac) {
        const double gx = chart.metric(g.x).determinant(), gy = chart.metric(g.y).determinant();
        const double gq = chart.metric(q).determinant();
        *jac = std::abs(det_M) / std::abs((hb * A).determinant()) * std::sqrt(gx * gy) / gq;
    }
    return {q, X};
}

}  // namespace detail

/// Inverse of phi_chart on interior elements, by Newton iteration on the
/// joint endpoint residual started from the coordinate guess.
template <int D>
TangentPoint<D> phi_inverse(const MetricChart<D>& chart, const Interior<D>& g, const Identification<D>& id = {},
                            const GeodesicOptions& opt = {}) {
    return detail::phi_inverse_solve(chart, g, id, opt, nullptr);
}

/// Outcome of a boundary-limit extrapolation.
template <int D>
struct BoundaryLimitResult {
    bool converged = false;
    Boundary<D> limit{};
    /// Empirical order p in |v_n - v_{n-1}| ~ hbar_n^p; +inf for constant sequences.
    double order = 0.0;
    /// Difference between the last two extrapolated estimates.
    double error_estimate = 0.0;
    std::string message;
};

/// Estimates the hbar -> 0 limit of a sequence of interior elements.
///
/// Each term is mapped to (q_n, X_n) by phi_inverse and the sequence is
/// extrapolated to hbar = 0 by Neville's polynomial scheme. The sequence is
/// reported as divergent when successive terms do not contract or when the
/// last two extrapolants disagree by more than `tol`.
template <int D>
BoundaryLimitResult<D> boundary_limit(const MetricChart<D>& chart, const std::vector<Interior<D>>& seq,
                                      const Identification<D>& id = {}, double tol = 1e-6,
                                      const GeodesicOptions& opt = {}) {
    if (seq.size() < 3) throw PreconditionError("boundary_limit needs at least three terms");
    for (std::size_t n = 0; n < seq.size(); ++n) {
        if (!(seq[n].hbar > 0.0) || (n > 0 && !(seq[n].hbar < seq[n - 1].hbar)))
            throw PreconditionError("boundary_limit: hbar must be positive and strictly decreasing");
    }
    using VecZ = Eigen::Matrix<double, 2 * D, 1>;
    std::vector<VecZ> v;
    std::vector<double> h;
    for (const auto& e : seq) {
        TangentPoint<D> tp;
        try {
            tp = phi_inverse(chart, e, id, opt);
        } catch (const InjectivityError& err) {
            BoundaryLimitResult<D> r;
            r.message = std::string("divergent: ") + err.what();
            r.order = -std::numeric_limits<double>::infinity();
            return r;
        } catch (const ExcursionError& err) {
            throw DomainError(std::string("boundary_limit: sequence leaves the chart: ") + err.what());
        }
        VecZ z;
        z << tp.q, tp.X;
        v.push_back(z);
        h.push_back(e.hbar);
    }
    const std::size_t N = v.size();
    // Neville tableau at hbar = 0: after step n, row[k] is the interpolant
    // through terms k..n, and est[n] = row[0].
    std::vector<VecZ> row(v);
    std::vector<VecZ> est(N);
    est[0] = v[0];
    for (std::size_t n = 1; n < N; ++n) {
        for (std::size_t k = n; k-- > 0;) row[k] = (h[k] * row[k + 1] - h[n] * row[k]) / (h[k] - h[n]);
        est[n] = row[0];
    }
    BoundaryLimitResult<D> r;
    const VecZ lim = est[N - 1];
    r.limit = {lim.template head<D>(), lim.template tail<D>()};
    r.error_estimate = (est[N - 1] - est[N - 2]).norm();
    const double d1 = (v[N - 2] - v[N - 3]).norm();
    const double d2 = (v[N - 1] - v[N - 2]).norm();
    // Terms that agree to the accuracy of phi_inverse form a constant sequence.
    const double stationary = 1e-11 * (1.0 + v[N - 1].norm());
    if (d2 <= stationary && d1 <= stationary) {
        r.order = std::numeric_limits<double>::infinity();
    } else if (d2 == 0.0) {
        r.order = std::numeric_limits<double>::infinity();
    } else if (d1 == 0.0) {
        r.order = -std::numeric_limits<double>::infinity();
    } else {
        r.order = std::log(d1 / d2) / std::log(h[N - 3] / h[N - 2]);
    }
    if (!(r.order > 0.0)) {
        r.message = "divergent: successive terms do not contract";
        return r;
    }
    if (!(r.error_estimate <= tol * (1.0 + lim.norm()))) {
        r.message = "not converged: extrapolation error " + std::to_string(r.error_estimate) + " exceeds tolerance";
        return r;
    }
    r.converged = true;
    r.message = "converged";
    return r;
}

/// Defect |X + Y - Z| of the triangle x = exp_{q'}(hbar X/2), y = exp_{q'}(-hbar X/2) = exp_q(hbar Y/2),
/// z = exp_q(-hbar Y/2), where (s, Z) = phi_inverse(x, z, hbar). Tangent vectors at the three
/// base points are compared by their chart components, without parallel transport.
template <int D>
double triangle_defect(const MetricChart<D>& chart, const Vec<D>& q_prime, const Vec<D>& q, const Vec<D>& X,
                       const Vec<D>& Y, double hbar, const GeodesicOptions& opt = {}) {
    const auto g1 = std::get<Interior<D>>(phi_chart(chart, TangentPoint<D>{q_prime, X}, hbar, {}, opt));
    const auto g2 = std::get<Interior<D>>(phi_chart(chart, TangentPoint<D>{q, Y}, hbar, {}, opt));
    if ((g1.y - g2.x).norm() > 1e-8)
        throw PreconditionError("triangle_defect: exp_{q'}(-hbar X/2) and exp_q(hbar Y/2) differ by " +
                                std::to_string((g1.y - g2.x).norm()));
    const TangentPoint<D> sz = phi_inverse(chart, Interior<D>{g1.x, g2.y, hbar}, {}, opt);
    return (X + Y - sz.X).norm();
}

/// Consistent triangle inputs built around a shared vertex y:
/// x = exp_y(hbar U), z = exp_y(hbar V), (q', X) = phi_inverse(x, y), (q, Y) = phi_inverse(y, z).
template <int D>
struct TriangleInputs {
    Vec<D> q_prime, q, X, Y;
};

template <int D>
TriangleInputs<D> triangle_configuration(const MetricChart<D>& chart, const Vec<D>& y, const Vec<D>& U,
                                         const Vec<D>& V, double hbar, const GeodesicOptions& opt = {}) {
    const Vec<D> x = exp_map(chart, TangentPoint<D>{y, Vec<D>(hbar * U)}, opt);
    const Vec<D> z = exp_map(chart, TangentPoint<D>{y, Vec<D>(hbar * V)}, opt);
    const TangentPoint<D> a = phi_inverse(chart, Interior<D>{x, y, hbar}, {}, opt);
    const TangentPoint<D> b = phi_inverse(chart, Interior<D>{y, z, hbar}, {}, opt);
    return {a.q, b.q, a.X, b.X};
}

}  // namespace tgq

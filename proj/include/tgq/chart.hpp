#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "tgq/errors.hpp"

namespace tgq {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;
template <int D>
using Mat = Eigen::Matrix<double, D, D>;

/// grad[k](i, j) = d g_ij / d q^k
template <int D>
using MetricGrad = std::array<Mat<D>, D>;
/// hess[k][l](i, j) = d^2 g_ij / d q^k d q^l
template <int D>
using MetricHess = std::array<std::array<Mat<D>, D>, D>;
/// gamma[k](i, j) = Gamma^k_ij
template <int D>
using Christoffel = std::array<Mat<D>, D>;

template <int D>
struct Box {
    Vec<D> lo;
    Vec<D> hi;

    bool contains(const Vec<D>& q, double slack = 0.0) const {
        for (int a = 0; a < D; ++a) {
            if (!(q[a] >= lo[a] - slack && q[a] <= hi[a] + slack)) return false;
        }
        return true;
    }
    Vec<D> extent() const { return hi - lo; }
    Vec<D> center() const { return 0.5 * (lo + hi); }
};

template <int D>
std::string format_point(const Vec<D>& q) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (int a = 0; a < D; ++a) os << (a ? ", " : "") << q[a];
    os << ')';
    return os.str();
}

/// A single coordinate patch carrying a Riemannian metric.
///
/// The metric and its derivatives are supplied as callables. Missing
/// derivatives fall back to central differences. `invariant_axes[a]` declares
/// that the metric does not depend on coordinate a, so translations along that
/// axis are isometries; kernel assembly uses this to share geometry between
/// lattice nodes.
template <int D>
struct MetricChart {
    static_assert(D == 1 || D == 2, "charts of dimension 1 or 2 are supported");
    static constexpr int dim = D;

    std::string name;
    Box<D> domain;
    std::function<Mat<D>(const Vec<D>&)> metric_fn;
    std::function<MetricGrad<D>(const Vec<D>&)> metric_grad_fn;
    std::function<MetricHess<D>(const Vec<D>&)> metric_hess_fn;
    double injectivity_floor = std::numeric_limits<double>::infinity();
    std::array<bool, D> invariant_axes{};
    bool flat = false;

    void require_inside(const Vec<D>& q) const {
        if (!domain.contains(q)) {
            throw DomainError("point " + format_point<D>(q) + " lies outside the domain of chart '" +
                              name + "'");
        }
    }

    Mat<D> metric(const Vec<D>& q) const { return metric_fn(q); }

    MetricGrad<D> metric_grad(const Vec<D>& q) const {
        if (metric_grad_fn) return metric_grad_fn(q);
        MetricGrad<D> g;
        const Vec<D> scale = domain.extent();
        for (int k = 0; k < D; ++k) {
            const double h = 1e-6 * std::max(1.0, std::min(scale[k], 1e3));
            Vec<D> qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            g[k] = (metric_fn(qp) - metric_fn(qm)) / (2.0 * h);
        }
        return g;
    }

    MetricHess<D> metric_hess(const Vec<D>& q) const {
        if (metric_hess_fn) return metric_hess_fn(q);
        MetricHess<D> H;
        const Vec<D> scale = domain.extent();
        for (int l = 0; l < D; ++l) {
            const double h = 1e-4 * std::max(1.0, std::min(scale[l], 1e3));
            Vec<D> qp = q, qm = q;
            qp[l] += h;
            qm[l] -= h;
            const MetricGrad<D> gp = metric_grad(qp), gm = metric_grad(qm);
            for (int k = 0; k < D; ++k) H[k][l] = (gp[k] - gm[k]) / (2.0 * h);
        }
        // symmetrize in (k, l) so that finite-difference noise does not break
        // the symmetry of mixed partials
        for (int k = 0; k < D; ++k)
            for (int l = k + 1; l < D; ++l) {
                const Mat<D> s = 0.5 * (H[k][l] + H[l][k]);
                H[k][l] = s;
                H[l][k] = s;
            }
        return H;
    }

    /// Checks positive definiteness by Cholesky on a uniform sample of the domain.
    void validate(int samples_per_axis = 9) const {
        const int m = std::max(samples_per_axis, 2);
        const int total = D == 1 ? m : m * m;
        for (int s = 0; s < total; ++s) {
            Vec<D> q;
            int rem = s;
            for (int a = D - 1; a >= 0; --a) {
                const int idx = rem % m;
                rem /= m;
                q[a] = domain.lo[a] + (domain.hi[a] - domain.lo[a]) * idx / (m - 1);
            }
            const Mat<D> g = metric_fn(q);
            if ((g - g.transpose()).norm() > 1e-12 * (1.0 + g.norm()))
                throw PreconditionError("metric of chart '" + name + "' is not symmetric at " +
                                        format_point<D>(q));
            Eigen::LLT<Mat<D>> llt(g);
            if (llt.info() != Eigen::Success || g.determinant() <= 0.0)
                throw PreconditionError("metric of chart '" + name +
                                        "' is not positive definite at " + format_point<D>(q));
        }
    }
};

template <int D>
using ChartPtr = std::shared_ptr<const MetricChart<D>>;

/// Square root of det g, the density of the Riemannian volume.
template <int D>
double volume_density(const MetricChart<D>& chart, const Vec<D>& q) {
    chart.require_inside(q);
    return std::sqrt(chart.metric(q).determinant());
}

/// Riemannian norm of X at q.
template <int D>
double metric_norm(const MetricChart<D>& chart, const Vec<D>& q, const Vec<D>& X) {
    return std::sqrt(std::max(0.0, X.dot(chart.metric(q) * X)));
}

namespace detail {

template <int D>
Christoffel<D> christoffel_from(const Mat<D>& ginv, const MetricGrad<D>& dg) {
    // lower[l](i, j) = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    Christoffel<D> lower;
    for (int l = 0; l < D; ++l)
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j)
                lower[l](i, j) = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
    Christoffel<D> gamma;
    for (int k = 0; k < D; ++k) {
        gamma[k].setZero();
        for (int l = 0; l < D; ++l) gamma[k] += ginv(k, l) * lower[l];
    }
    return gamma;
}

/// Christoffel symbols together with their first derivatives.
template <int D>
struct Connection {
    Christoffel<D> gamma;
    std::array<Christoffel<D>, D> dgamma;  // dgamma[m][k](i, j) = d_m Gamma^k_ij
};

template <int D>
Connection<D> connection_at(const MetricChart<D>& chart, const Vec<D>& q) {
    const Mat<D> g = chart.metric(q);
    const Mat<D> ginv = g.inverse();
    const MetricGrad<D> dg = chart.metric_grad(q);
    const MetricHess<D> ddg = chart.metric_hess(q);
    Connection<D> c;
    Christoffel<D> lower;
    for (int l = 0; l < D; ++l)
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j)
                lower[l](i, j) = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
    for (int k = 0; k < D; ++k) {
        c.gamma[k].setZero();
        for (int l = 0; l < D; ++l) c.gamma[k] += ginv(k, l) * lower[l];
    }
    for (int m = 0; m < D; ++m) {
        const Mat<D> dginv = -ginv * dg[m] * ginv;
        Christoffel<D> dlower;
        for (int l = 0; l < D; ++l)
            for (int i = 0; i < D; ++i)
                for (int j = 0; j < D; ++j)
                    dlower[l](i, j) = 0.5 * (ddg[m][i](j, l) + ddg[m][j](i, l) - ddg[m][l](i, j));
        for (int k = 0; k < D; ++k) {
            c.dgamma[m][k].setZero();
            for (int l = 0; l < D; ++l)
                c.dgamma[m][k] += dginv(k, l) * lower[l] + ginv(k, l) * dlower[l];
        }
    }
    return c;
}

}  // namespace detail

/// Levi-Civita connection coefficients Gamma^k_ij at q.
template <int D>
Christoffel<D> christoffel(const MetricChart<D>& chart, const Vec<D>& q) {
    chart.require_inside(q);
    const Mat<D> g = chart.metric(q);
    return detail::christoffel_from<D>(g.inverse(), chart.metric_grad(q));
}

// ---------------------------------------------------------------------------
// Built-in charts

template <int D>
MetricChart<D> euclidean_chart(double half_width = 100.0) {
    MetricChart<D> c;
    c.name = D == 1 ? "euclidean-1d" : "euclidean-2d";
    c.domain.lo = Vec<D>::Constant(-half_width);
    c.domain.hi = Vec<D>::Constant(half_width);
    c.metric_fn = [](const Vec<D>&) { return Mat<D>::Identity(); };
    c.metric_grad_fn = [](const Vec<D>&) {
        MetricGrad<D> g;
        for (auto& m : g) m.setZero();
        return g;
    };
    c.metric_hess_fn = [](const Vec<D>&) {
        MetricHess<D> h;
        for (auto& row : h)
            for (auto& m : row) m.setZero();
        return h;
    };
    c.invariant_axes.fill(true);
    c.flat = true;
    return c;
}

/// Unit sphere in polar coordinates (theta, phi), g = diag(1, sin^2 theta).
inline MetricChart<2> sphere_polar_chart(double theta_margin = 0.3, double phi_half_width = std::numbers::pi,
                                         double injectivity_floor = 1.0) {
    MetricChart<2> c;
    c.name = "sphere-polar";
    c.domain.lo = Vec<2>(theta_margin, -phi_half_width);
    c.domain.hi = Vec<2>(std::numbers::pi - theta_margin, phi_half_width);
    c.metric_fn = [](const Vec<2>& q) {
        const double s = std::sin(q[0]);
        Mat<2> g;
        g << 1.0, 0.0, 0.0, s * s;
        return g;
    };
    c.metric_grad_fn = [](const Vec<2>& q) {
        MetricGrad<2> g;
        g[0] << 0.0, 0.0, 0.0, std::sin(2.0 * q[0]);
        g[1].setZero();
        return g;
    };
    c.metric_hess_fn = [](const Vec<2>& q) {
        MetricHess<2> h;
        for (auto& row : h)
            for (auto& m : row) m.setZero();
        h[0][0] << 0.0, 0.0, 0.0, 2.0 * std::cos(2.0 * q[0]);
        return h;
    };
    c.injectivity_floor = injectivity_floor;
    c.invariant_axes = {false, true};
    return c;
}

/// One-dimensional conformal metric g = exp(2 lambda(q)), lambda a polynomial
/// with coefficients in increasing degree.
inline MetricChart<1> conformal_1d_chart(std::vector<double> lambda_coeffs = {0.0, 0.1, -0.05},
                                         double lo = -4.0, double hi = 4.0) {
    MetricChart<1> c;
    c.name = "conformal-1d";
    c.domain.lo = Vec<1>(lo);
    c.domain.hi = Vec<1>(hi);
    auto poly = [coeffs = lambda_coeffs](double x, int deriv) {
        double acc = 0.0;
        for (int k = static_cast<int>(coeffs.size()) - 1; k >= deriv; --k) {
            double f = 1.0;
            for (int j = 0; j < deriv; ++j) f *= (k - j);
            acc = acc * x + f * coeffs[k];
        }
        return acc;
    };
    c.metric_fn = [poly](const Vec<1>& q) { return Mat<1>(std::exp(2.0 * poly(q[0], 0))); };
    c.metric_grad_fn = [poly](const Vec<1>& q) {
        const double g = std::exp(2.0 * poly(q[0], 0));
        return MetricGrad<1>{Mat<1>(2.0 * poly(q[0], 1) * g)};
    };
    c.metric_hess_fn = [poly](const Vec<1>& q) {
        const double g = std::exp(2.0 * poly(q[0], 0));
        const double l1 = poly(q[0], 1), l2 = poly(q[0], 2);
        return MetricHess<1>{{MetricGrad<1>{Mat<1>((2.0 * l2 + 4.0 * l1 * l1) * g)}}};
    };
    return c;
}

}  // namespace tgq

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/fourier.hpp"
#include "tgq/geodesic.hpp"
#include "tgq/grids.hpp"
#include "tgq/groupoid.hpp"
#include "tgq/operator.hpp"
#include "tgq/scheme.hpp"

namespace tgq {

namespace detail {

/// Trigonometric interpolation on one periodic, cell-centred axis.
/// The interpolant is sum_kappa c_kappa e^{i kappa (q - q_0)} with c = C v;
/// for even counts the Nyquist mode is split evenly between +kappa_N and -kappa_N.
struct TrigAxis {
    double origin = 0.0;
    Eigen::VectorXd kappa;
    Eigen::MatrixXcd C;

    TrigAxis() = default;
    explicit TrigAxis(const Grid1& g) : origin(g.node(0)) {
        const int N = g.count;
        const bool even = N % 2 == 0;
        const int M = even ? N + 1 : N;
        const double base = 2.0 * std::numbers::pi / g.period();
        kappa.resize(M);
        C.resize(M, N);
        int row = 0;
        for (int j = 0; j < N; ++j) {
            const int f = j < (N + 1) / 2 ? j : j - N;
            if (even && j == N / 2) {
                for (int sgn : {+1, -1}) {
                    kappa[row] = sgn * base * (N / 2);
                    for (int k = 0; k < N; ++k) C(row, k) = (k % 2 == 0 ? 0.5 : -0.5) / N;
                    ++row;
                }
                continue;
            }
            kappa[row] = base * f;
            for (int k = 0; k < N; ++k)
                C(row, k) = std::polar(1.0 / N, -2.0 * std::numbers::pi * static_cast<double>((1LL * f * k) % N) / N);
            ++row;
        }
    }
    Eigen::VectorXcd phases(double q) const {
        Eigen::VectorXcd e(kappa.size());
        for (Eigen::Index k = 0; k < kappa.size(); ++k) e[k] = std::polar(1.0, kappa[k] * (q - origin));
        return e;
    }
    /// Interpolation weights: value(q) = weights(q) . samples.
    Eigen::VectorXcd weights(double q) const { return C.transpose() * phases(q); }
};

/// A ~ U V with orthogonal-range U, found by a seeded randomized range finder.
/// `direct` is set when no factorization of rank below max_rank reaches the tolerance.
struct LowRank {
    bool direct = true;
    Eigen::MatrixXcd U;
    Eigen::MatrixXcd V;
};

inline LowRank low_rank_factor(const CMatrix& A, double tol, int max_rank, std::uint64_t seed = 0x9e3779b9ULL) {
    LowRank lr;
    const double total = A.norm();
    if (total == 0.0) {
        lr.direct = false;
        lr.U = Eigen::MatrixXcd::Zero(A.rows(), 1);
        lr.V = Eigen::MatrixXcd::Zero(1, A.cols());
        return lr;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (int k = 8; k <= max_rank; k *= 2) {
        Eigen::MatrixXcd Om(A.cols(), k);
        for (Eigen::Index i = 0; i < Om.size(); ++i) Om.data()[i] = cplx(nd(rng), nd(rng));
        const Eigen::MatrixXcd Y = A * Om;
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Y);
        const Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(A.rows(), k);
        const Eigen::MatrixXcd B = Q.adjoint() * A;
        const double resid = (A - Q * B).norm();
        if (resid > tol * total) continue;
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& s = svd.singularValues();
        int r = 0;
        while (r < s.size() && s[r] > 1e-3 * tol * s[0]) ++r;
        r = std::max(r, 1);
        lr.direct = false;
        lr.U = Q * svd.matrixU().leftCols(r) * s.head(r).asDiagonal();
        lr.V = svd.matrixV().leftCols(r).adjoint();
        return lr;
    }
    return lr;
}

}  // namespace detail

/// Evaluates the fibre transform F(q, X) = sum_p e^{i p X} a(q, p) dp^n / sqrt(g(q))
/// of a sampled symbol at arbitrary (q, X), using the exact trigonometric
/// interpolant of the samples in q.
template <int D>
class FiberEvaluator {
public:
    explicit FiberEvaluator(const SymbolGrid<D>& a, double rank_tol = 1e-14) : chart_(a.chart), q_(a.q_grid), p_(a.p_grid) {
        a.validate();
        for (int ax = 0; ax < D; ++ax) trig_[ax] = detail::TrigAxis(q_.axes[ax]);
        lr_ = detail::low_rank_factor(a.values, rank_tol, std::max(8, q_.size() / 4));
        if (lr_.direct) values_ = a.values;
    }

    int rank() const { return lr_.direct ? q_.size() : static_cast<int>(lr_.U.cols()); }
    const ProductGrid<D>& q_grid() const { return q_; }
    const detail::TrigAxis& axis(int a) const { return trig_[a]; }

    /// Vector e(X)_k = prod_a e^{i p_{k,a} X_a} dp_a over the momentum grid.
    CVector phase_vector(const Vec<D>& X) const {
        CVector e(p_.size());
        std::array<Eigen::VectorXcd, D> ax;
        for (int a = 0; a < D; ++a) {
            const Grid1& g = p_.axes[a];
            ax[a].resize(g.count);
            for (int k = 0; k < g.count; ++k) ax[a][k] = std::polar(g.spacing, g.node(k) * X[a]);
        }
        if constexpr (D == 1) {
            e = ax[0];
        } else {
            const int N1 = p_.axes[1].count;
            for (int k0 = 0; k0 < p_.axes[0].count; ++k0) e.segment(k0 * N1, N1) = ax[0][k0] * ax[1];
        }
        return e;
    }

    /// sqrt(g(q_k)) F(q_k, X) at every node q_k of the symbol grid.
    CVector q_samples(const Vec<D>& X) const {
        const CVector e = phase_vector(X);
        if (lr_.direct) return values_ * e;
        return lr_.U * (lr_.V * e);
    }

    /// F(q, X) at a single point.
    cplx operator()(const Vec<D>& q, const Vec<D>& X) const {
        const CVector g = q_samples(X);
        cplx v;
        if constexpr (D == 1) {
            v = trig_[0].weights(q[0]).cwiseProduct(g).sum();
        } else {
            const int N0 = q_.axes[0].count, N1 = q_.axes[1].count;
            Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(g.data(), N0, N1);
            v = (trig_[0].weights(q[0]).transpose() * G * trig_[1].weights(q[1])).value();
        }
        return v / std::sqrt(chart_->metric(q).determinant());
    }

    /// Trigonometric coefficients along `axis` of q_axis -> sqrt(g) F(q, X),
    /// with the other coordinates fixed at q and the phase of q[axis] folded in:
    /// sqrt(g) F(q + s e_axis, X) = sum_kappa c_kappa e^{i kappa s}.
    CVector line_coefficients(const Vec<D>& q, const Vec<D>& X, int axis) const {
        const CVector g = q_samples(X);
        CVector h;
        if constexpr (D == 1) {
            h = g;
        } else {
            const int N0 = q_.axes[0].count, N1 = q_.axes[1].count;
            Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(g.data(), N0, N1);
            if (axis == 1)
                h = G.transpose() * trig_[0].weights(q[0]);
            else
                h = G * trig_[1].weights(q[1]);
        }
        CVector c = trig_[axis].C * h;
        return c.cwiseProduct(trig_[axis].phases(q[axis]));
    }

private:
    ChartPtr<D> chart_;
    ProductGrid<D> q_, p_;
    std::array<detail::TrigAxis, D> trig_;
    detail::LowRank lr_;
    CMatrix values_;
};

/// Region |X_a| <= box_a, |X| <= radius of the tangent fibre outside which a
/// symbol's fibre transform is treated as zero.
template <int D>
struct FiberCut {
    Vec<D> box = Vec<D>::Zero();
    double radius = 0.0;

    bool contains(const Vec<D>& X) const {
        for (int a = 0; a < D; ++a)
            if (std::abs(X[a]) > box[a]) return false;
        return X.norm() <= radius;
    }
    FiberCut merged(const FiberCut& o) const { return {box.cwiseMax(o.box), std::max(radius, o.radius)}; }
};

/// Smallest cut containing every fibre node where |F| exceeds threshold * max |F|.
template <int D>
FiberCut<D> fiber_support(const SymbolGrid<D>& a, double threshold = 1e-13) {
    const FiberFunctionGrid<D> F = fiber_fourier_inverse(a);
    const Eigen::RowVectorXd colmax = F.values.cwiseAbs().colwise().maxCoeff();
    const double top = colmax.size() ? colmax.maxCoeff() : 0.0;
    FiberCut<D> cut;
    if (top == 0.0) return cut;
    for (int m = 0; m < F.X_grid.size(); ++m) {
        if (colmax[m] <= threshold * top) continue;
        const Vec<D> X = F.X_grid.node(m);
        for (int ax = 0; ax < D; ++ax) cut.box[ax] = std::max(cut.box[ax], std::abs(X[ax]));
        cut.radius = std::max(cut.radius, X.norm());
    }
    return cut;
}

/// Support cut of a symbol widened by a fraction of a fibre cell, for use with off-grid X.
/// The fraction avoids landing on lattice offsets for the usual refinements.
template <int D>
FiberCut<D> fiber_cut_for(const SymbolGrid<D>& a, double threshold) {
    const ProductGrid<D> X_grid = fiber_grid_for(a.p_grid);
    FiberCut<D> cut = fiber_support(a, threshold);
    double widest = 0.0;
    for (int ax = 0; ax < D; ++ax) {
        cut.box[ax] += 0.37 * X_grid.axes[ax].spacing;
        widest = std::max(widest, X_grid.axes[ax].spacing);
    }
    cut.radius += 0.37 * widest;
    return cut;
}

template <int D>
struct QuantizeOptions {
    /// Kernel lattice spacing is hbar * dX / refine per axis.
    int refine = 1;
    /// Relative level below which fibre samples count as outside the symbol's support.
    double support_threshold = 1e-13;
    /// Extra lattice offsets considered beyond the flat estimate on curved charts.
    int curved_margin = 2;
    double hbar0 = 1.0;
    GeodesicOptions geodesic{.fixed_steps = 10};
};

/// Kernel lattice matched to a symbol grid and hbar.
template <int D>
std::shared_ptr<const KernelLattice<D>> lattice_for(const SymbolGrid<D>& a, double hbar, int refine = 1) {
    if (refine < 1) throw PreconditionError("lattice refinement must be at least 1");
    const ProductGrid<D> X_grid = fiber_grid_for(a.p_grid);
    Vec<D> center, half, spacing;
    for (int ax = 0; ax < D; ++ax) {
        center[ax] = a.q_grid.axes[ax].center;
        half[ax] = a.q_grid.axes[ax].half_extent();
        spacing[ax] = hbar * X_grid.axes[ax].spacing / refine;
    }
    return make_lattice<D>(a.chart, center, half, spacing);
}

/// Geometric data of a kernel lattice for one scheme and hbar: the chart
/// inverse (q, X) and the Jacobian J at every kernel node inside the band,
/// computed once per equivalence class of nodes under the chart's isometric
/// translations.
template <int D>
struct KernelGeometry {
    struct Key {
        Vec<D> q;
        Vec<D> X;
        double J = 1.0;
        double sqrt_g = 1.0;
    };

    std::shared_ptr<const KernelLattice<D>> lattice;
    QuantizationScheme<D> scheme;
    double hbar = 0.0;
    FiberCut<D> cut;
    int invariant_axis = -1;
    std::vector<Key> keys;
    std::vector<int> key_begin{0};
    std::vector<int> rows, cols, shifts;
    std::size_t flagged = 0;

    std::size_t entries() const { return rows.size(); }
};

template <int D>
KernelGeometry<D> build_geometry(std::shared_ptr<const KernelLattice<D>> lattice, const QuantizationScheme<D>& scheme,
                                 double hbar, const FiberCut<D>& cut, const QuantizeOptions<D>& opt = {}) {
    scheme.validate();
    const MetricChart<D>& chart = *lattice->chart;
    if (!chart.flat && !scheme.is_moyal())
        throw UnsupportedError("quantization on the curved chart '" + chart.name + "' is implemented for Moyal only");
    if (!(hbar > 0.0 && hbar <= opt.hbar0)) throw PreconditionError("quantize: hbar must lie in (0, hbar0]");

    KernelGeometry<D> geo;
    geo.lattice = lattice;
    geo.scheme = scheme;
    geo.hbar = hbar;
    geo.cut = cut;
    for (int ax = D - 1; ax >= 0; --ax)
        if (chart.invariant_axes[ax]) {
            geo.invariant_axis = ax;
            break;
        }
    const int inv = geo.invariant_axis;

    const Mat<D> dphi = scheme.id.phi1 - scheme.id.phi2;
    std::array<int, D> band{};
    for (int a = 0; a < D; ++a) {
        double reach = 0.0;
        for (int b = 0; b < D; ++b) reach += std::abs(dphi(a, b)) * cut.box[b];
        band[a] = static_cast<int>(std::floor(hbar * reach / lattice->spacing[a] * (1.0 + 1e-9)));
        if (!chart.flat) band[a] += opt.curved_margin;
        band[a] = std::min(band[a], lattice->count(a) - 1);
    }

    int box = 1;
    for (int a = 0; a < D; ++a) box *= 2 * band[a] + 1;
    const Mat<D> dphi_inv = dphi.inverse();

    for (int i = 0; i < lattice->size(); ++i) {
        const std::array<int, D> ii = lattice->unflatten(i);
        if (inv >= 0 && ii[inv] != lattice->half_count[inv]) continue;
        for (int b = 0; b < box; ++b) {
            std::array<int, D> delta{};
            int r = b;
            for (int a = D - 1; a >= 0; --a) {
                delta[a] = r % (2 * band[a] + 1) - band[a];
                r /= 2 * band[a] + 1;
            }
            std::array<int, D> jj = ii;
            bool ok = true;
            for (int a = 0; a < D; ++a) {
                if (a == inv) continue;
                jj[a] = ii[a] - delta[a];
                if (jj[a] < 0 || jj[a] >= lattice->count(a)) ok = false;
            }
            if (!ok) continue;
            Vec<D> x, y;
            for (int a = 0; a < D; ++a) {
                x[a] = lattice->coordinate(a, a == inv ? lattice->half_count[a] + delta[a] : ii[a]);
                y[a] = lattice->coordinate(a, jj[a]);
            }
            // Entries sharing this key.
            std::vector<std::array<int, 3>> members;
            if (inv >= 0) {
                const int m = delta[inv], n = lattice->count(inv);
                for (int jc = std::max(0, -m); jc < std::min(n, n - m); ++jc) {
                    std::array<int, D> ri = ii, ci = jj;
                    ri[inv] = jc + m;
                    ci[inv] = jc;
                    members.push_back({lattice->flatten(ri), lattice->flatten(ci), jc});
                }
            } else {
                members.push_back({i, lattice->flatten(jj), -1});
            }
            if (members.empty()) continue;

            // Failures are only counted for pairs whose coordinate guess lies inside the cut;
            // the others belong to the band margin and would be dropped anyway.
            const bool expected = cut.contains(Vec<D>(dphi_inv * (x - y) / hbar));
            typename KernelGeometry<D>::Key key;
            try {
                if (!chart.domain.contains(x) || !chart.domain.contains(y)) throw DomainError("node outside chart");
                const TangentPoint<D> t =
                    detail::phi_inverse_solve(chart, Interior<D>{x, y, hbar}, scheme.id, opt.geodesic, &key.J);
                key.q = t.q;
                key.X = t.X;
                if (!cut.contains(key.X)) continue;
                key.sqrt_g = std::sqrt(chart.metric(t.q).determinant());
            } catch (const InjectivityError&) {
                if (expected) geo.flagged += members.size();
                continue;
            } catch (const ConvergenceError&) {
                if (expected) geo.flagged += members.size();
                continue;
            } catch (const DomainError&) {
                if (expected) geo.flagged += members.size();
                continue;
            } catch (const ExcursionError&) {
                if (expected) geo.flagged += members.size();
                continue;
            }
            geo.keys.push_back(key);
            for (const auto& mbr : members) {
                geo.rows.push_back(mbr[0]);
                geo.cols.push_back(mbr[1]);
                geo.shifts.push_back(mbr[2]);
            }
            geo.key_begin.push_back(static_cast<int>(geo.rows.size()));
        }
    }
    return geo;
}

/// Assembles the kernel k = (2 pi hbar)^{-n} J^{exponent} F(q, X) on a prepared geometry.
/// Entries whose X falls outside `own` (when given) are left out.
template <int D>
KernelOperator<D> quantize_on(const KernelGeometry<D>& geo, const FiberEvaluator<D>& F, double exponent,
                              const FiberCut<D>* own = nullptr) {
    const KernelLattice<D>& L = *geo.lattice;
    const double pref = std::pow(2.0 * std::numbers::pi * geo.hbar, -static_cast<double>(D));
    const int inv = geo.invariant_axis;
    Eigen::MatrixXcd T;
    if (inv >= 0) {
        const Eigen::VectorXd& kap = F.axis(inv).kappa;
        T.resize(L.count(inv), kap.size());
        for (int j = 0; j < L.count(inv); ++j)
            for (Eigen::Index k = 0; k < kap.size(); ++k)
                T(j, k) = std::polar(1.0, kap[k] * (L.coordinate(inv, j) - L.center[inv]));
    }
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(geo.entries());
    for (std::size_t k = 0; k < geo.keys.size(); ++k) {
        const auto& key = geo.keys[k];
        if (own && !own->contains(key.X)) continue;
        const double fac = pref * std::pow(key.J, exponent);
        const int b = geo.key_begin[k], e = geo.key_begin[k + 1];
        if (inv >= 0) {
            const CVector c = F.line_coefficients(key.q, key.X, inv) * (fac / key.sqrt_g);
            for (int t = b; t < e; ++t)
                trip.emplace_back(geo.rows[t], geo.cols[t], T.row(geo.shifts[t]).transpose().cwiseProduct(c).sum());
        } else {
            trip.emplace_back(geo.rows[b], geo.cols[b], fac * F(key.q, key.X));
        }
    }
    SpMat K(L.size(), L.size());
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    return {geo.lattice, std::move(K), geo.hbar, geo.flagged};
}

template <int D>
void require_chart(const MetricChart<D>& chart, const SymbolGrid<D>& a) {
    if (a.chart.get() != &chart && a.chart->name != chart.name)
        throw PreconditionError("symbol was sampled on chart '" + a.chart->name + "', not '" + chart.name + "'");
}

/// Quantization k_a(x, y) = (2 pi hbar)^{-n} J^{e}(q, X) F a(q, X) at (q, X) = Phi^{-1}(x, y, hbar).
template <int D>
KernelOperator<D> quantize(const QuantizationScheme<D>& scheme, const MetricChart<D>& chart, const SymbolGrid<D>& a,
                           double hbar, const QuantizeOptions<D>& opt = {}) {
    require_chart(chart, a);
    a.validate();
    const auto lattice = lattice_for(a, hbar, opt.refine);
    const KernelGeometry<D> geo = build_geometry(lattice, scheme, hbar, fiber_cut_for(a, opt.support_threshold), opt);
    return quantize_on(geo, FiberEvaluator<D>(a), scheme.quantize_exponent());
}

/// Flat-chart kernel evaluated entry by entry from q = x - hbar phi1 X, X = (phi1 - phi2)^{-1}(x - y) / hbar,
/// without geodesics or Jacobians. Uses the same lattice and fibre cut as quantize.
template <int D>
KernelOperator<D> flat_closed_form_kernel(const QuantizationScheme<D>& scheme, const SymbolGrid<D>& a, double hbar,
                                          const QuantizeOptions<D>& opt = {}) {
    if (!a.chart->flat) throw UnsupportedError("closed-form kernel needs a flat chart, got '" + a.chart->name + "'");
    scheme.validate();
    a.validate();
    if (!(hbar > 0.0 && hbar <= opt.hbar0)) throw PreconditionError("closed-form kernel: hbar must lie in (0, hbar0]");
    const auto L = lattice_for(a, hbar, opt.refine);
    const FiberCut<D> cut = fiber_cut_for(a, opt.support_threshold);
    const FiberEvaluator<D> F(a);
    const Mat<D> inv = (scheme.id.phi1 - scheme.id.phi2).inverse();
    const double pref = std::pow(2.0 * std::numbers::pi * hbar, -static_cast<double>(D));
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int i = 0; i < L->size(); ++i) {
        const Vec<D> x = L->node(i);
        for (int j = 0; j < L->size(); ++j) {
            const Vec<D> y = L->node(j);
            const Vec<D> X = inv * (x - y) / hbar;
            if (!cut.contains(X)) continue;
            const Vec<D> q = x - hbar * scheme.id.phi1 * X;
            trip.emplace_back(i, j, pref * F(q, X));
        }
    }
    SpMat K(L->size(), L->size());
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    return {L, std::move(K), hbar, 0};
}

template <int D>
struct DequantizeOptions {
    /// Half-width of the windowed-sinc stencil, in lattice cells.
    int radius = 10;
    /// Kaiser window shape parameter; negative selects pi * radius / 2.
    double beta = -1.0;
    /// Fibre nodes with |X_a| above this fraction of X_max,a are not sampled.
    double fiber_fraction = 2.0 / 3.0;
    GeodesicOptions geodesic{.fixed_steps = 10};
};

namespace detail {

/// Windowed-sinc weights for interpolating at lattice coordinate u (in cells from node 0).
inline void kaiser_taps(double u, int radius, double beta, int count, int& first, std::vector<double>& w) {
    const int base = static_cast<int>(std::floor(u));
    first = base - radius + 1;
    w.assign(2 * radius, 0.0);
    const double norm = std::cyl_bessel_i(0.0, beta);
    for (int t = 0; t < 2 * radius; ++t) {
        const int node = first + t;
        if (node < 0 || node >= count) continue;
        const double d = u - node;
        const double r = d / radius;
        if (std::abs(r) >= 1.0) continue;
        const double sinc = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
        w[t] = sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / norm;
    }
}

template <int D>
struct SeparableTaps {
    std::array<int, D> first{};
    std::array<std::vector<double>, D> w;
};

template <int D>
bool taps_at(const KernelLattice<D>& L, const Vec<D>& x, int radius, double beta, SeparableTaps<D>& out) {
    for (int a = 0; a < D; ++a) {
        const double u = (x[a] - L.coordinate(a, 0)) / L.spacing[a];
        if (u < -0.5 || u > L.count(a) - 0.5) return false;
        kaiser_taps(u, radius, beta, L.count(a), out.first[a], out.w[a]);
    }
    return true;
}

/// Lattice nodes with non-zero weight in a separable stencil.
template <int D>
std::vector<std::pair<int, double>> stencil(const KernelLattice<D>& L, const SeparableTaps<D>& t) {
    std::vector<std::pair<int, double>> out;
    const int width = static_cast<int>(t.w[0].size());
    if constexpr (D == 1) {
        for (int a = 0; a < width; ++a)
            if (t.w[0][a] != 0.0) out.emplace_back(t.first[0] + a, t.w[0][a]);
    } else {
        for (int a = 0; a < width; ++a) {
            if (t.w[0][a] == 0.0) continue;
            for (int b = 0; b < width; ++b) {
                if (t.w[1][b] == 0.0) continue;
                out.emplace_back(L.flatten({t.first[0] + a, t.first[1] + b}), t.w[0][a] * t.w[1][b]);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Dequantization a = F[(2 pi hbar)^n J^{e} k(Phi(q, X, hbar))], reading the kernel
/// between lattice nodes with Kaiser-windowed sinc interpolation.
template <int D>
SymbolGrid<D> dequantize(const QuantizationScheme<D>& scheme, const KernelOperator<D>& K, const ProductGrid<D>& q_grid,
                         const ProductGrid<D>& p_grid, const DequantizeOptions<D>& opt = {}) {
    scheme.validate();
    const KernelLattice<D>& L = *K.lattice;
    const MetricChart<D>& chart = *L.chart;
    if (!chart.flat && !scheme.is_moyal())
        throw UnsupportedError("dequantization on the curved chart '" + chart.name + "' is implemented for Moyal only");
    const double hbar = K.hbar;
    const double beta = opt.beta < 0.0 ? 0.5 * std::numbers::pi * opt.radius : opt.beta;
    const ProductGrid<D> X_grid = fiber_grid_for(p_grid);
    const double exponent = scheme.dequantize_exponent();
    const double scale = std::pow(2.0 * std::numbers::pi * hbar, static_cast<double>(D));
    CMatrix Fv = CMatrix::Zero(q_grid.size(), X_grid.size());
    detail::SeparableTaps<D> tx, ty;
    for (int i = 0; i < q_grid.size(); ++i) {
        const Vec<D> q = q_grid.node(i);
        for (int m = 0; m < X_grid.size(); ++m) {
            const auto im = X_grid.unflatten(m);
            bool keep = true;
            for (int a = 0; a < D; ++a) {
                const Grid1& g = X_grid.axes[a];
                if (g.count % 2 == 0 && im[a] == 0) keep = false;
                if (std::abs(g.node(im[a])) > opt.fiber_fraction * g.half_extent() * (1.0 + 1e-12)) keep = false;
            }
            if (!keep) continue;
            const Vec<D> X = X_grid.node(m);
            Vec<D> x, y;
            double J = 1.0;
            try {
                x = detail::flow_point(chart, q, Vec<D>(scheme.id.phi1 * X), hbar, opt.geodesic);
                y = detail::flow_point(chart, q, Vec<D>(scheme.id.phi2 * X), hbar, opt.geodesic);
                if (exponent != 0.0)
                    J = detail::jacobian_general(chart, q, X, scheme.id.phi1, scheme.id.phi2, hbar, opt.geodesic);
            } catch (const ExcursionError&) {
                continue;
            }
            if (!detail::taps_at(L, x, opt.radius, beta, tx) || !detail::taps_at(L, y, opt.radius, beta, ty)) continue;
            const auto sx = detail::stencil(L, tx);
            const auto sy = detail::stencil(L, ty);
            cplx acc = 0.0;
            for (const auto& [r, wr] : sx) {
                cplx row = 0.0;
                for (const auto& [c, wc] : sy) row += wc * K.kernel.coeff(r, c);
                acc += wr * row;
            }
            Fv(i, m) = scale * std::pow(J, exponent) * acc;
        }
    }
    return fiber_fourier(FiberFunctionGrid<D>{L.chart, q_grid, X_grid, std::move(Fv)});
}

/// ||K - K*||_HS / ||K||_HS for K = quantize(a); a must be real.
template <int D>
double reality_defect(const QuantizationScheme<D>& scheme, const MetricChart<D>& chart, const SymbolGrid<D>& a,
                      double hbar, const QuantizeOptions<D>& opt = {}) {
    // band projection leaves imaginary round-off, which is dropped
    if (a.values.imag().cwiseAbs().maxCoeff() > 1e-12 * a.values.cwiseAbs().maxCoeff())
        throw PreconditionError("reality_defect needs a real symbol");
    SymbolGrid<D> re = a;
    re.values = a.values.real().template cast<cplx>();
    const KernelOperator<D> K = quantize(scheme, chart, re, hbar, opt);
    const SpMat S = K.symmetrized();
    const double n = S.norm();
    if (n == 0.0) throw PreconditionError("reality_defect: zero kernel, ratio undefined");
    const SpMat Sa = S.adjoint();
    return SpMat(S - Sa).norm() / n;
}

}  // namespace tgq

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/grids.hpp"

namespace tgq {

using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

/// Uniform lattice of kernel nodes x_i = center + j * spacing with |j_a| <= half_count_a,
/// carrying the Riemannian quadrature weights w_i = sqrt(g(x_i)) * prod_a spacing_a.
template <int D>
struct KernelLattice {
    ChartPtr<D> chart;
    Vec<D> center;
    Vec<D> spacing;
    std::array<int, D> half_count{};
    Eigen::VectorXd weights;

    int count(int a) const { return 2 * half_count[a] + 1; }
    int size() const {
        int n = 1;
        for (int a = 0; a < D; ++a) n *= count(a);
        return n;
    }
    std::array<int, D> unflatten(int flat) const {
        std::array<int, D> idx{};
        for (int a = D - 1; a >= 0; --a) {
            idx[a] = flat % count(a);
            flat /= count(a);
        }
        return idx;
    }
    int flatten(const std::array<int, D>& idx) const {
        int f = 0;
        for (int a = 0; a < D; ++a) f = f * count(a) + idx[a];
        return f;
    }
    double coordinate(int axis, int j) const { return center[axis] + (j - half_count[axis]) * spacing[axis]; }
    Vec<D> node(int flat) const {
        const auto idx = unflatten(flat);
        Vec<D> v;
        for (int a = 0; a < D; ++a) v[a] = coordinate(a, idx[a]);
        return v;
    }
};

/// Lattice with the given spacing covering the box [center - half_width, center + half_width].
template <int D>
std::shared_ptr<const KernelLattice<D>> make_lattice(ChartPtr<D> chart, const Vec<D>& center, const Vec<D>& half_width,
                                                     const Vec<D>& spacing) {
    auto L = std::make_shared<KernelLattice<D>>();
    L->chart = chart;
    L->center = center;
    L->spacing = spacing;
    for (int a = 0; a < D; ++a) {
        if (!(spacing[a] > 0.0)) throw PreconditionError("lattice spacing must be positive");
        L->half_count[a] = static_cast<int>(std::floor(half_width[a] / spacing[a] * (1.0 + 1e-12)));
    }
    const double cell = spacing.prod();
    L->weights.resize(L->size());
    for (int i = 0; i < L->size(); ++i) {
        const Vec<D> x = L->node(i);
        chart->require_inside(x);
        L->weights[i] = std::sqrt(chart->metric(x).determinant()) * cell;
    }
    return L;
}

/// Integral operator (A f)(x) = int k(x, y) f(y) dnu(y), discretized on a lattice.
template <int D>
struct KernelOperator {
    std::shared_ptr<const KernelLattice<D>> lattice;
    SpMat kernel;
    double hbar = 0.0;
    /// Kernel nodes zeroed because the chart inverse was not admissible there.
    std::size_t flagged = 0;

    int size() const { return lattice->size(); }
    const Eigen::VectorXd& weights() const { return lattice->weights; }

    /// D^{1/2} K D^{1/2}: the operator as a matrix on the weighted l2 space, in an orthonormal basis.
    SpMat symmetrized() const {
        const Eigen::VectorXd s = weights().cwiseSqrt();
        SpMat m = s.asDiagonal() * kernel * s.asDiagonal();
        m.makeCompressed();
        return m;
    }
    /// Weighted matrix A_ij = k(x_i, x_j) w_j.
    SpMat weighted() const {
        SpMat m = kernel * weights().asDiagonal();
        m.makeCompressed();
        return m;
    }
};

namespace detail {

template <int D>
void require_compatible(const KernelOperator<D>& a, const KernelOperator<D>& b) {
    if (a.lattice != b.lattice &&
        (a.lattice->size() != b.lattice->size() || a.lattice->spacing != b.lattice->spacing ||
         a.lattice->center != b.lattice->center))
        throw ShapeError("operators live on different lattices");
    if (a.hbar != b.hbar) throw ShapeError("operators have different hbar");
}

}  // namespace detail

/// Unit of the kernel algebra: k(x_i, x_j) = delta_ij / w_j.
template <int D>
KernelOperator<D> identity_operator(std::shared_ptr<const KernelLattice<D>> lattice, double hbar) {
    const int n = lattice->size();
    SpMat K(n, n);
    K.reserve(Eigen::VectorXi::Constant(n, 1));
    for (int i = 0; i < n; ++i) K.insert(i, i) = 1.0 / lattice->weights[i];
    K.makeCompressed();
    return {lattice, std::move(K), hbar, 0};
}

/// Kernel composition (a * b)(x, z) = int a(x, y) b(y, z) dnu(y).
template <int D>
KernelOperator<D> op_product(const KernelOperator<D>& a, const KernelOperator<D>& b) {
    detail::require_compatible(a, b);
    SpMat aw = a.kernel * a.weights().asDiagonal();
    SpMat c = (aw * b.kernel).pruned();
    c.makeCompressed();
    return {a.lattice, std::move(c), a.hbar, a.flagged + b.flagged};
}

template <int D>
KernelOperator<D> op_adjoint(const KernelOperator<D>& a) {
    SpMat k = a.kernel.adjoint();
    k.makeCompressed();
    return {a.lattice, std::move(k), a.hbar, a.flagged};
}

/// alpha a + beta b.
template <int D>
KernelOperator<D> op_combine(cplx alpha, const KernelOperator<D>& a, cplx beta, const KernelOperator<D>& b) {
    detail::require_compatible(a, b);
    SpMat k = alpha * a.kernel + beta * b.kernel;
    k.makeCompressed();
    return {a.lattice, std::move(k), a.hbar, a.flagged + b.flagged};
}

template <int D>
KernelOperator<D> commutator(const KernelOperator<D>& a, const KernelOperator<D>& b) {
    return op_combine(cplx(1.0), op_product(a, b), cplx(-1.0), op_product(b, a));
}

/// Tr A = sum_i k(x_i, x_i) w_i.
template <int D>
cplx op_trace(const KernelOperator<D>& a) {
    cplx t = 0.0;
    for (int i = 0; i < a.kernel.outerSize(); ++i) t += a.kernel.coeff(i, i) * a.weights()[i];
    return t;
}

/// Tr(AB) evaluated without forming the product.
template <int D>
cplx op_trace_product(const KernelOperator<D>& a, const KernelOperator<D>& b) {
    detail::require_compatible(a, b);
    const Eigen::VectorXd& w = a.weights();
    cplx t = 0.0;
    for (int i = 0; i < a.kernel.outerSize(); ++i) {
        for (SpMat::InnerIterator it(a.kernel, i); it; ++it) {
            const int j = static_cast<int>(it.col());
            t += it.value() * b.kernel.coeff(j, i) * w[i] * w[j];
        }
    }
    return t;
}

/// Hilbert-Schmidt norm on the weighted l2 space.
template <int D>
double hs_norm(const KernelOperator<D>& a) {
    return a.symmetrized().norm();
}

/// Matrix-free linear map, used for norms of operator expressions.
struct LinearMap {
    int n = 0;
    std::function<CVector(const CVector&)> apply;
    std::function<CVector(const CVector&)> apply_adjoint;
};

struct NormOptions {
    /// Maps of at most this size are converted to dense matrices and decomposed exactly.
    int dense_limit = 256;
    int max_iter = 400;
    double rel_tol = 1e-13;
    std::uint64_t seed = 0x5eed5eedULL;
};

inline LinearMap as_linear_map(const SpMat& m) {
    auto mp = std::make_shared<SpMat>(m);
    auto ma = std::make_shared<SpMat>(m.adjoint());
    return {static_cast<int>(m.rows()), [mp](const CVector& x) -> CVector { return (*mp) * x; },
            [ma](const CVector& x) -> CVector { return (*ma) * x; }};
}

/// Largest singular value: dense SVD for small maps, otherwise Lanczos with full
/// reorthogonalization on M^H M.
inline double spectral_norm(const LinearMap& M, const NormOptions& opt = {}) {
    const int n = M.n;
    if (n == 0) return 0.0;
    if (n <= opt.dense_limit) {
        Eigen::MatrixXcd A(n, n);
        CVector e = CVector::Zero(n);
        for (int j = 0; j < n; ++j) {
            e[j] = 1.0;
            A.col(j) = M.apply(e);
            e[j] = 0.0;
        }
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
        return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    }
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    CVector v(n);
    for (int i = 0; i < n; ++i) v[i] = cplx(nd(rng), nd(rng));
    v.normalize();
    const int kmax = std::min(opt.max_iter, n);
    Eigen::MatrixXcd V(n, kmax + 1);
    V.col(0) = v;
    std::vector<double> alpha, beta;
    double lam_prev = -1.0, lam = 0.0;
    int stable = 0;
    for (int k = 0; k < kmax; ++k) {
        CVector w = M.apply_adjoint(M.apply(V.col(k)));
        const double a = V.col(k).dot(w).real();
        alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass) {
            const CVector c = V.leftCols(k + 1).adjoint() * w;
            w -= V.leftCols(k + 1) * c;
        }
        const double b = w.norm();
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k + 1, k + 1);
        for (int i = 0; i <= k; ++i) {
            T(i, i) = alpha[i];
            if (i < k) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
        lam = es.eigenvalues().maxCoeff();
        if (lam <= 0.0) return 0.0;
        if (std::abs(lam - lam_prev) <= opt.rel_tol * lam) {
            if (++stable >= 3) break;
        } else {
            stable = 0;
        }
        lam_prev = lam;
        if (b <= 1e-14 * std::sqrt(lam) * std::sqrt(lam)) break;
        beta.push_back(b);
        V.col(k + 1) = w / b;
    }
    return std::sqrt(std::max(lam, 0.0));
}

/// Operator norm on L^2(M, dnu): largest singular value of D^{1/2} K D^{1/2}.
template <int D>
double op_norm(const KernelOperator<D>& a, const NormOptions& opt = {}) {
    return spectral_norm(as_linear_map(a.symmetrized()), opt);
}

}  // namespace tgq

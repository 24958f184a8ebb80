#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/errors.hpp"
#include "tgq/grids.hpp"
#include "tgq/groupoid.hpp"

namespace tgq {

/// Where the Jacobian factor J is placed between quantization and dequantization.
enum class JPlacement { symmetric_split, quantize_only, dequantize_only };

inline std::string to_string(JPlacement j) {
    switch (j) {
        case JPlacement::symmetric_split: return "symmetric_split";
        case JPlacement::quantize_only: return "quantize_only";
        case JPlacement::dequantize_only: return "dequantize_only";
    }
    return "?";
}

inline JPlacement j_placement_from_string(const std::string& s) {
    if (s == "symmetric_split") return JPlacement::symmetric_split;
    if (s == "quantize_only") return JPlacement::quantize_only;
    if (s == "dequantize_only") return JPlacement::dequantize_only;
    throw PreconditionError("unknown j_placement '" + s + "'");
}

/// A (phi1, phi2) quantization rule together with the placement of J.
template <int D>
struct QuantizationScheme {
    std::string name = "moyal";
    Identification<D> id;
    JPlacement j_placement = JPlacement::symmetric_split;

    static QuantizationScheme moyal(JPlacement j = JPlacement::symmetric_split) {
        return {"moyal", Identification<D>::moyal(), j};
    }
    /// phi1 = 0, phi2 = -1.
    static QuantizationScheme standard() { return {"standard", Identification<D>::scalar(0.0, -1.0), {}}; }
    /// phi1 = 1, phi2 = 0.
    static QuantizationScheme antistandard() { return {"antistandard", Identification<D>::scalar(1.0, 0.0), {}}; }
    /// phi1 = 1/2 + t, phi2 = -1/2 + t.
    static QuantizationScheme shifted(double t) {
        return {"shifted(" + std::to_string(t) + ")", Identification<D>::scalar(0.5 + t, -0.5 + t), {}};
    }
    static QuantizationScheme from_name(const std::string& n, JPlacement j = JPlacement::symmetric_split) {
        QuantizationScheme s;
        if (n == "moyal") s = moyal();
        else if (n == "standard") s = standard();
        else if (n == "antistandard") s = antistandard();
        else throw PreconditionError("unknown scheme '" + n + "'");
        s.j_placement = j;
        return s;
    }

    void validate() const {
        if (!(std::abs((id.phi1 - id.phi2).determinant()) > 1e-12))
            throw PreconditionError("scheme '" + name + "': phi1 - phi2 is not invertible");
    }
    bool connes_type() const { return (id.phi1 - id.phi2 - Mat<D>::Identity()).cwiseAbs().maxCoeff() <= 1e-14; }
    bool is_moyal() const {
        return (id.phi1 - 0.5 * Mat<D>::Identity()).cwiseAbs().maxCoeff() <= 1e-14 &&
               (id.phi2 + 0.5 * Mat<D>::Identity()).cwiseAbs().maxCoeff() <= 1e-14;
    }
    /// Exponent of J applied to the kernel by quantization.
    double quantize_exponent() const {
        switch (j_placement) {
            case JPlacement::symmetric_split: return -0.5;
            case JPlacement::quantize_only: return -1.0;
            case JPlacement::dequantize_only: return 0.0;
        }
        return -0.5;
    }
    /// Exponent of J applied by dequantization; the two always differ by one.
    double dequantize_exponent() const { return 1.0 + quantize_exponent(); }
};

/// Ordering function f(theta, tau) = exp(i theta . (1/2 - phi1) tau / hbar) of a flat Connes-type rule.
template <int D>
struct OrderingFunction {
    Mat<D> A;  // 1/2 - phi1
    double hbar = 1.0;

    cplx operator()(const Vec<D>& theta, const Vec<D>& tau) const {
        return std::polar(1.0, theta.dot(A * tau) / hbar);
    }

    bool is_semitracial(double tol = 1e-12) const {
        return std::abs((*this)(Vec<D>::Zero(), Vec<D>::Zero()) - cplx(1.0)) <= tol;
    }
    /// f(theta, tau) = conj f(-theta, -tau) on a sample grid.
    bool is_real(double tol = 1e-12) const {
        return for_all_samples([&](const Vec<D>& th, const Vec<D>& ta) {
            return std::abs((*this)(th, ta) - std::conj((*this)(Vec<D>(-th), Vec<D>(-ta)))) <= tol;
        });
    }
    /// |f| = 1 on a sample grid.
    bool is_tracial(double tol = 1e-12) const {
        return for_all_samples([&](const Vec<D>& th, const Vec<D>& ta) {
            return std::abs(std::abs((*this)(th, ta)) - 1.0) <= tol;
        });
    }

private:
    template <class Pred>
    bool for_all_samples(Pred pred) const {
        const std::vector<double> vals{-1.7, -0.6, 0.0, 0.45, 1.3};
        const int m = static_cast<int>(vals.size());
        const int total = D == 1 ? m * m : m * m * m * m;
        for (int s = 0; s < total; ++s) {
            Vec<D> th, ta;
            int r = s;
            for (int a = 0; a < D; ++a) {
                th[a] = vals[r % m];
                r /= m;
                ta[a] = vals[r % m];
                r /= m;
            }
            if (!pred(th, ta)) return false;
        }
        return true;
    }
};

template <int D>
OrderingFunction<D> ordering_of_scheme(const QuantizationScheme<D>& scheme, double hbar) {
    if (!scheme.connes_type())
        throw UnsupportedError("ordering function is defined only for rules with phi1 - phi2 = 1");
    if (!(hbar > 0.0)) throw PreconditionError("ordering function needs hbar > 0");
    return {Mat<D>(0.5 * Mat<D>::Identity() - scheme.id.phi1), hbar};
}

}  // namespace tgq

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/geodesic.hpp"
#include "tgq/groupoid.hpp"
#include "tgq/rates.hpp"

namespace tgq {

/// Outcome of one pass/fail check of the suite.
struct CheckResult {
    std::string group;
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    /// How value is compared with threshold: "<=", ">=" or "==".
    std::string relation = "<=";
    bool pass = false;
    std::string detail;
};

inline CheckResult make_check(std::string group, std::string name, double value, std::string relation,
                              double threshold, std::string detail = {}) {
    bool pass = false;
    if (relation == "<=") pass = value <= threshold;
    else if (relation == ">=") pass = value >= threshold;
    else if (relation == "==") pass = value == threshold;
    else throw PreconditionError("unknown check relation '" + relation + "'");
    return {std::move(group), std::move(name), value, threshold, std::move(relation), pass, std::move(detail)};
}

struct GeometryCheckConfig {
    std::uint64_t seed = 7;
    int j_samples = 5;
    std::vector<double> j_hbar = geometric_list(0.4, 0.003125, 8);
    double j_min_slope = 1.8;
    int flat_samples = 1000;
    double flat_tol = 1e-9;
    int triangle_samples = 5;
    std::vector<double> triangle_hbar{0.2, 0.1, 0.05, 0.025};
    double triangle_min_slope = 1.85;
    double flat_triangle_tol = 1e-10;
    int roundtrip_samples = 100;
    double roundtrip_tol = 1e-9;
};

struct GroupoidCheckConfig {
    std::uint64_t seed = 11;
    int elements = 1000;
    int roundtrip_samples = 100;
    double roundtrip_tol = 1e-8;
    int sequences = 20;
    int sequence_terms = 6;
    double sequence_hbar = 0.2;
    double continuity_tol = 1e-6;
    double boundary_tol = 1e-12;
};

namespace detail {

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    template <int D>
    Vec<D> box(const Vec<D>& lo, const Vec<D>& hi) {
        Vec<D> v;
        for (int a = 0; a < D; ++a) v[a] = uniform(lo[a], hi[a]);
        return v;
    }
    /// Point in the sphere chart away from the poles and the phi seam.
    Vec<2> sphere_point() { return {uniform(0.7, std::numbers::pi - 0.7), uniform(-1.5, 1.5)}; }
    Vec<2> vector(double r) { return {uniform(-r, r), uniform(-r, r)}; }

private:
    std::mt19937_64 rng_;
};

inline std::string format_slopes(const std::vector<double>& s) {
    std::ostringstream os;
    os << "slopes:";
    for (double v : s) os << ' ' << v;
    return os.str();
}

}  // namespace detail

/// |J - 1| decay, flat J identity, triangle-defect decay and exp/log roundtrips.
inline std::vector<CheckResult> geometry_checks(const GeometryCheckConfig& cfg = {}) {
    std::vector<CheckResult> out;
    const MetricChart<2> sphere = sphere_polar_chart();
    detail::Sampler rng(cfg.seed);

    {
        std::vector<double> slopes;
        for (int s = 0; s < cfg.j_samples; ++s) {
            const Vec<2> q = rng.sphere_point();
            const Vec<2> X = rng.vector(1.0);
            std::vector<std::pair<double, double>> pts;
            for (double h : cfg.j_hbar)
                pts.emplace_back(h, std::abs(jacobian_J(sphere, TangentPoint<2>{q, X}, 0.5 * h) - 1.0));
            const RateFit f = fit_rate(pts);
            slopes.push_back(f.verdict == "fit" ? f.slope : -1.0);
        }
        out.push_back(make_check("geometry", "sphere |J-1| slope (min over samples)",
                                 *std::min_element(slopes.begin(), slopes.end()), ">=", cfg.j_min_slope,
                                 detail::format_slopes(slopes)));
    }
    {
        const MetricChart<2> flat2 = euclidean_chart<2>();
        const MetricChart<1> flat1 = euclidean_chart<1>();
        double worst = 0.0;
        for (int s = 0; s < cfg.flat_samples; ++s) {
            const double h = rng.uniform(1e-3, 1.0);
            if (s % 2 == 0) {
                const Vec<2> q = rng.box<2>(Vec<2>::Constant(-5.0), Vec<2>::Constant(5.0));
                const Vec<2> X = rng.vector(3.0);
                worst = std::max(worst, std::abs(jacobian_J(flat2, TangentPoint<2>{q, X}, 0.5 * h) - 1.0));
            } else {
                const Vec<1> q(rng.uniform(-5.0, 5.0)), X(rng.uniform(-3.0, 3.0));
                worst = std::max(worst, std::abs(jacobian_J(flat1, TangentPoint<1>{q, X}, 0.5 * h) - 1.0));
            }
        }
        out.push_back(make_check("geometry", "flat |J-1| max", worst, "<=", cfg.flat_tol));
    }
    {
        std::vector<double> slopes;
        for (int s = 0; s < cfg.triangle_samples; ++s) {
            const Vec<2> y = rng.sphere_point();
            const Vec<2> U = rng.vector(1.0), V = rng.vector(1.0);
            std::vector<std::pair<double, double>> pts;
            for (double h : cfg.triangle_hbar) {
                const TriangleInputs<2> t = triangle_configuration(sphere, y, U, V, h);
                pts.emplace_back(h, triangle_defect(sphere, t.q_prime, t.q, t.X, t.Y, h));
            }
            const RateFit f = fit_rate(pts);
            slopes.push_back(f.verdict == "fit" ? f.slope : -1.0);
        }
        out.push_back(make_check("geometry", "sphere triangle defect slope (min over samples)",
                                 *std::min_element(slopes.begin(), slopes.end()), ">=", cfg.triangle_min_slope,
                                 detail::format_slopes(slopes) +
                                     "; tangent vectors compared by chart components, no parallel transport"));
        const MetricChart<2> flat = euclidean_chart<2>();
        double worst = 0.0;
        for (int s = 0; s < cfg.triangle_samples; ++s) {
            const Vec<2> y = rng.box<2>(Vec<2>::Constant(-3.0), Vec<2>::Constant(3.0));
            const Vec<2> U = rng.vector(1.0), V = rng.vector(1.0);
            for (double h : cfg.triangle_hbar) {
                const TriangleInputs<2> t = triangle_configuration(flat, y, U, V, h);
                worst = std::max(worst, triangle_defect(flat, t.q_prime, t.q, t.X, t.Y, h));
            }
        }
        out.push_back(make_check("geometry", "flat triangle defect max", worst, "<=", cfg.flat_triangle_tol));
    }
    {
        double worst = 0.0;
        for (int s = 0; s < cfg.roundtrip_samples; ++s) {
            const Vec<2> q = rng.sphere_point();
            const Vec<2> X = rng.vector(0.5);
            const Vec<2> x = exp_map(sphere, TangentPoint<2>{q, X});
            worst = std::max(worst, (log_map(sphere, q, x) - X).norm());
        }
        out.push_back(make_check("geometry", "sphere log(exp) roundtrip max", worst, "<=", cfg.roundtrip_tol));
    }
    return out;
}

namespace detail {

/// Counts violations of the five groupoid rules on composable triples (g, h, k).
template <int D>
int groupoid_rule_violations(const GroupoidElement<D>& g, const GroupoidElement<D>& h, const GroupoidElement<D>& k,
                             double tol) {
    int bad = 0;
    auto same = [&](const GroupoidElement<D>& a, const GroupoidElement<D>& b) { return same_element(a, b, tol); };
    const auto u = range(g);
    if (!is_unit(u) || !same(range(u), u) || !same(source(u), u)) ++bad;
    if (!same(compose(range(g), g), g) || !same(compose(g, source(g)), g)) ++bad;
    if (!same(compose(g, inverse(g)), range(g)) || !same(compose(inverse(g), g), source(g))) ++bad;
    const auto gh = compose(g, h);
    if (!same(range(gh), range(g)) || !same(source(gh), source(h))) ++bad;
    if (!same(compose(gh, k), compose(g, compose(h, k)))) ++bad;
    return bad;
}

}  // namespace detail

/// Groupoid rules on random elements of both strata, the chart roundtrip and
/// continuity of the product across the boundary.
inline std::vector<CheckResult> groupoid_checks(const GroupoidCheckConfig& cfg = {}) {
    std::vector<CheckResult> out;
    const MetricChart<2> sphere = sphere_polar_chart();
    detail::Sampler rng(cfg.seed);

    int bad_interior = 0, bad_boundary = 0;
    for (int s = 0; s < cfg.elements; ++s) {
        const double h = rng.uniform(1e-3, 1.0);
        const Vec<2> a = rng.sphere_point(), b = rng.sphere_point(), c = rng.sphere_point(), d = rng.sphere_point();
        bad_interior += detail::groupoid_rule_violations<2>(Interior<2>{a, b, h}, Interior<2>{b, c, h},
                                                            Interior<2>{c, d, h}, 0.0) > 0;
        const Vec<2> q = rng.sphere_point();
        bad_boundary += detail::groupoid_rule_violations<2>(Boundary<2>{q, rng.vector(2.0)},
                                                            Boundary<2>{q, rng.vector(2.0)},
                                                            Boundary<2>{q, rng.vector(2.0)}, cfg.boundary_tol) > 0;
    }
    out.push_back(make_check("groupoid", "interior rule violations (exact)", bad_interior, "==", 0.0,
                             std::to_string(cfg.elements) + " triples"));
    out.push_back(make_check("groupoid", "boundary rule violations (tol 1e-12)", bad_boundary, "==", 0.0,
                             std::to_string(cfg.elements) + " triples"));

    double worst = 0.0;
    for (int s = 0; s < cfg.roundtrip_samples; ++s) {
        const Vec<2> q = rng.sphere_point();
        const Vec<2> X = rng.vector(1.0);
        const double h = rng.uniform(0.01, 0.8);
        const auto g = std::get<Interior<2>>(phi_chart(sphere, TangentPoint<2>{q, X}, h));
        const TangentPoint<2> p = phi_inverse(sphere, g);
        worst = std::max(worst, std::max((p.q - q).norm(), (p.X - X).norm()));
    }
    out.push_back(make_check("groupoid", "phi_inverse(phi_chart) roundtrip max", worst, "<=", cfg.roundtrip_tol));

    double gap = 0.0;
    int failed = 0;
    for (int s = 0; s < cfg.sequences; ++s) {
        const Vec<2> q = rng.sphere_point();
        const Vec<2> X = rng.vector(1.0), V = rng.vector(1.0);
        std::vector<Interior<2>> gs, hs, ps;
        for (int n = 0; n < cfg.sequence_terms; ++n) {
            const double h = cfg.sequence_hbar * std::pow(0.5, n);
            const auto g = std::get<Interior<2>>(phi_chart(sphere, TangentPoint<2>{q, X}, h));
            const Interior<2> k{g.y, exp_map(sphere, TangentPoint<2>{g.y, Vec<2>(h * V)}), h};
            gs.push_back(g);
            hs.push_back(k);
            ps.push_back(std::get<Interior<2>>(compose<2>(g, k)));
        }
        const auto lg = boundary_limit(sphere, gs, {}, cfg.continuity_tol);
        const auto lh = boundary_limit(sphere, hs, {}, cfg.continuity_tol);
        const auto lp = boundary_limit(sphere, ps, {}, cfg.continuity_tol);
        if (!lg.converged || !lh.converged || !lp.converged) {
            ++failed;
            continue;
        }
        const auto prod = std::get<Boundary<2>>(
            compose<2>(Boundary<2>{lg.limit.q, lg.limit.X}, Boundary<2>{lg.limit.q, lh.limit.X}));
        gap = std::max({gap, (lg.limit.q - lh.limit.q).norm(), (lp.limit.q - prod.q).norm(),
                        (lp.limit.X - prod.X).norm()});
    }
    out.push_back(make_check("groupoid", "sequences without a converged limit", failed, "==", 0.0));
    out.push_back(make_check("groupoid", "limit of products vs product of limits", gap, "<=", cfg.continuity_tol,
                             std::to_string(cfg.sequences) + " sequences"));
    return out;
}

}  // namespace tgq

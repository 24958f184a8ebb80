#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tgq/chart.hpp"
#include "tgq/checks.hpp"
#include "tgq/errors.hpp"
#include "tgq/grids.hpp"
#include "tgq/operator.hpp"
#include "tgq/quantize.hpp"
#include "tgq/rates.hpp"
#include "tgq/scheme.hpp"
#include "tgq/symbols.hpp"

namespace tgq {

using json = nlohmann::json;

inline constexpr int report_schema_version = 1;

/// One configured pass criterion on the defect table of an experiment.
///
/// Kinds:
///   max                all defects <= max
///   slope_range        fitted slope in [min, max]
///   min_slope          fitted slope >= min, or an exact verdict
///   max_slope          fitted slope <= max (used to show that a defect does not decay)
///   last_max           defect at the smallest hbar <= max
///   lipschitz          max_k defect_k / |hbar_k - hbar_{k-1}| <= max
///   ratio_at_smallest  defect / reference defect at the smallest hbar >= min
struct CheckSpec {
    std::string axiom;
    std::string kind;
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();
    std::string reference;
};

struct WindowSpec {
    double sigma_q = 1.2;
    double sigma_p = 1.2;
    double q_taper_start = 0.375;
    double q_taper_end = 0.97;
    double p_taper_start = 0.375;
    double p_taper_end = 0.97;
};

struct ExperimentConfig {
    std::string name;
    std::string chart = "euclidean";
    int dim = 1;
    double half_width = 100.0;
    double theta_margin = 0.3;
    double injectivity_floor = 1.0;
    std::vector<double> lambda_coeffs{0.0, 0.1, -0.05};

    std::string scheme = "moyal";
    /// Parameter t of the "shifted" scheme phi1 = 1/2 + t, phi2 = -1/2 + t.
    double shift = 0.0;
    std::string j_placement = "symmetric_split";
    /// Further J placements for which the trace defect is also reported.
    std::vector<std::string> extra_placements;

    std::vector<double> hbar = geometric_list(0.4, 0.003125, 8);
    double hbar0 = 1.0;

    int points = 64;
    std::vector<double> q_center;
    std::vector<double> q_half_width;
    double p_max = 4.0;
    double band = 2.0 / 3.0;

    /// "canonical" (windowed coordinate pair) or "random" (seeded windowed random pair).
    std::string symbols = "canonical";
    double offset = 0.0;
    WindowSpec window;
    std::string bracket = "q_first";

    double support_threshold = 1e-13;
    int refine = 1;
    /// Defects at or below this value count as exact in the rate fits.
    double floor = 0.0;

    std::vector<CheckSpec> checks;
};

struct SuiteConfig {
    std::uint64_t seed = 20240601ULL;
    int workers = 1;
    std::optional<GeometryCheckConfig> geometry;
    std::optional<GroupoidCheckConfig> groupoid;
    std::vector<ExperimentConfig> experiments;
};

struct DefectRow {
    std::string experiment;
    std::string axiom;
    double hbar = 0.0;
    double defect = 0.0;
    std::string norm_kind;
};

struct RateRow {
    std::string experiment;
    std::string axiom;
    RateFit fit;
};

struct ExperimentResult {
    std::string name;
    /// Empty on success; otherwise the message of the error that stopped the experiment.
    std::string error;
    std::vector<DefectRow> defects;
    std::vector<RateRow> rates;
    std::vector<CheckResult> checks;
    json provenance;
    double seconds = 0.0;

    bool pass() const {
        if (!error.empty()) return false;
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    }
};

struct SuiteReport {
    std::vector<CheckResult> geometry;
    std::vector<CheckResult> groupoid;
    std::string geometry_error;
    std::string groupoid_error;
    std::vector<ExperimentResult> experiments;
    std::uint64_t seed = 0;

    bool pass() const {
        auto ok = [](const std::vector<CheckResult>& v) {
            return std::all_of(v.begin(), v.end(), [](const CheckResult& c) { return c.pass; });
        };
        if (!geometry_error.empty() || !groupoid_error.empty()) return false;
        if (!ok(geometry) || !ok(groupoid)) return false;
        return std::all_of(experiments.begin(), experiments.end(), [](const ExperimentResult& e) { return e.pass(); });
    }
};

// ---------------------------------------------------------------------------
// Configuration parsing

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw PreconditionError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw PreconditionError(where + ": unknown key '" + it.key() + "'");
}

inline double number_or(const json& j, const char* key, double def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw PreconditionError(std::string("key '") + key + "' must be a number");
    }
    return v.get<double>();
}

inline std::vector<double> hbar_list_from(const json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    require_keys(j, {"start", "end", "count"}, "hbar");
    return geometric_list(j.at("start").get<double>(), j.at("end").get<double>(), j.at("count").get<int>());
}

inline CheckSpec check_from(const json& j) {
    require_keys(j, {"axiom", "kind", "min", "max", "reference"}, "check");
    CheckSpec c;
    c.axiom = j.at("axiom").get<std::string>();
    c.kind = j.at("kind").get<std::string>();
    c.min = number_or(j, "min", c.min);
    c.max = number_or(j, "max", c.max);
    c.reference = j.value("reference", std::string());
    static const std::set<std::string> kinds{"max",      "slope_range", "min_slope",        "max_slope",
                                             "last_max", "lipschitz",   "ratio_at_smallest"};
    if (!kinds.count(c.kind)) throw PreconditionError("check: unknown kind '" + c.kind + "'");
    if (c.kind == "ratio_at_smallest" && c.reference.empty())
        throw PreconditionError("check: ratio_at_smallest needs a reference axiom");
    return c;
}

inline void validate_hbar_list(const std::vector<double>& h, double hbar0, const std::string& where) {
    if (h.empty()) throw PreconditionError(where + ": hbar list is empty");
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (!(h[k] > 0.0 && h[k] <= hbar0))
            throw PreconditionError(where + ": hbar values must lie in (0, hbar0]");
        if (k > 0 && !(h[k] < h[k - 1])) throw PreconditionError(where + ": hbar list must be strictly decreasing");
    }
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const json& j) {
    detail::require_keys(j,
                         {"name", "chart", "scheme", "j_placement", "extra_placements", "hbar", "hbar0", "grid",
                          "symbols", "bracket", "support_threshold", "refine", "floor", "checks"},
                         "experiment");
    ExperimentConfig e;
    e.name = j.at("name").get<std::string>();
    const std::string where = "experiment '" + e.name + "'";
    if (j.contains("chart")) {
        const json& c = j.at("chart");
        detail::require_keys(c, {"name", "dim", "half_width", "theta_margin", "injectivity_floor", "lambda"},
                             where + " chart");
        e.chart = c.value("name", e.chart);
        e.dim = c.value("dim", e.chart == "sphere-polar" ? 2 : e.dim);
        e.half_width = c.value("half_width", e.half_width);
        e.theta_margin = c.value("theta_margin", e.theta_margin);
        e.injectivity_floor = c.value("injectivity_floor", e.injectivity_floor);
        if (c.contains("lambda")) e.lambda_coeffs = c.at("lambda").get<std::vector<double>>();
    }
    if (j.contains("scheme")) {
        const json& s = j.at("scheme");
        if (s.is_string()) {
            e.scheme = s.get<std::string>();
        } else {
            detail::require_keys(s, {"name", "t"}, where + " scheme");
            e.scheme = s.at("name").get<std::string>();
            e.shift = s.value("t", 0.0);
        }
    }
    e.j_placement = j.value("j_placement", e.j_placement);
    j_placement_from_string(e.j_placement);
    if (j.contains("extra_placements")) {
        e.extra_placements = j.at("extra_placements").get<std::vector<std::string>>();
        for (const auto& p : e.extra_placements) j_placement_from_string(p);
    }
    e.hbar0 = j.value("hbar0", e.hbar0);
    if (j.contains("hbar")) e.hbar = detail::hbar_list_from(j.at("hbar"));
    detail::validate_hbar_list(e.hbar, e.hbar0, where);

    if (e.dim != 1 && e.dim != 2) throw PreconditionError(where + ": dim must be 1 or 2");
    e.q_center.assign(e.dim, 0.0);
    if (e.chart == "sphere-polar") e.q_center[0] = 0.5 * std::numbers::pi;
    e.q_half_width.assign(e.dim, e.chart == "sphere-polar" ? 1.0 : 4.0);
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        detail::require_keys(g, {"points", "q_center", "q_half_width", "p_max", "band"}, where + " grid");
        e.points = g.value("points", e.points);
        if (g.contains("q_center")) e.q_center = g.at("q_center").get<std::vector<double>>();
        if (g.contains("q_half_width")) e.q_half_width = g.at("q_half_width").get<std::vector<double>>();
        e.p_max = g.value("p_max", e.p_max);
        e.band = g.value("band", e.band);
    }
    if (static_cast<int>(e.q_center.size()) != e.dim || static_cast<int>(e.q_half_width.size()) != e.dim)
        throw PreconditionError(where + ": q_center and q_half_width need one entry per dimension");
    if (j.contains("symbols")) {
        const json& s = j.at("symbols");
        detail::require_keys(s, {"kind", "offset", "window"}, where + " symbols");
        e.symbols = s.value("kind", e.symbols);
        if (e.symbols != "canonical" && e.symbols != "random")
            throw PreconditionError(where + ": symbols.kind must be 'canonical' or 'random'");
        e.offset = s.value("offset", e.offset);
        if (s.contains("window")) {
            const json& w = s.at("window");
            detail::require_keys(w,
                                 {"sigma_q", "sigma_p", "q_taper_start", "q_taper_end", "p_taper_start",
                                  "p_taper_end"},
                                 where + " window");
            e.window.sigma_q = w.value("sigma_q", e.window.sigma_q);
            e.window.sigma_p = w.value("sigma_p", e.window.sigma_p);
            e.window.q_taper_start = w.value("q_taper_start", e.window.q_taper_start);
            e.window.q_taper_end = w.value("q_taper_end", e.window.q_taper_end);
            e.window.p_taper_start = w.value("p_taper_start", e.window.p_taper_start);
            e.window.p_taper_end = w.value("p_taper_end", e.window.p_taper_end);
        }
    }
    e.bracket = j.value("bracket", e.bracket);
    bracket_convention_from_string(e.bracket);
    e.support_threshold = j.value("support_threshold", e.support_threshold);
    e.refine = j.value("refine", e.refine);
    e.floor = j.value("floor", e.floor);
    if (j.contains("checks"))
        for (const auto& c : j.at("checks")) e.checks.push_back(detail::check_from(c));
    return e;
}

inline GeometryCheckConfig geometry_config_from_json(const json& j) {
    GeometryCheckConfig g;
    if (j.is_boolean()) return g;
    detail::require_keys(j,
                         {"seed", "j_samples", "j_hbar", "j_min_slope", "flat_samples", "flat_tol",
                          "triangle_samples", "triangle_hbar", "triangle_min_slope", "flat_triangle_tol",
                          "roundtrip_samples", "roundtrip_tol"},
                         "geometry");
    g.seed = j.value("seed", g.seed);
    g.j_samples = j.value("j_samples", g.j_samples);
    if (j.contains("j_hbar")) g.j_hbar = detail::hbar_list_from(j.at("j_hbar"));
    g.j_min_slope = j.value("j_min_slope", g.j_min_slope);
    g.flat_samples = j.value("flat_samples", g.flat_samples);
    g.flat_tol = j.value("flat_tol", g.flat_tol);
    g.triangle_samples = j.value("triangle_samples", g.triangle_samples);
    if (j.contains("triangle_hbar")) g.triangle_hbar = detail::hbar_list_from(j.at("triangle_hbar"));
    g.triangle_min_slope = j.value("triangle_min_slope", g.triangle_min_slope);
    g.flat_triangle_tol = j.value("flat_triangle_tol", g.flat_triangle_tol);
    g.roundtrip_samples = j.value("roundtrip_samples", g.roundtrip_samples);
    g.roundtrip_tol = j.value("roundtrip_tol", g.roundtrip_tol);
    return g;
}

inline GroupoidCheckConfig groupoid_config_from_json(const json& j) {
    GroupoidCheckConfig g;
    if (j.is_boolean()) return g;
    detail::require_keys(j,
                         {"seed", "elements", "roundtrip_samples", "roundtrip_tol", "sequences", "sequence_terms",
                          "sequence_hbar", "continuity_tol", "boundary_tol"},
                         "groupoid");
    g.seed = j.value("seed", g.seed);
    g.elements = j.value("elements", g.elements);
    g.roundtrip_samples = j.value("roundtrip_samples", g.roundtrip_samples);
    g.roundtrip_tol = j.value("roundtrip_tol", g.roundtrip_tol);
    g.sequences = j.value("sequences", g.sequences);
    g.sequence_terms = j.value("sequence_terms", g.sequence_terms);
    g.sequence_hbar = j.value("sequence_hbar", g.sequence_hbar);
    g.continuity_tol = j.value("continuity_tol", g.continuity_tol);
    g.boundary_tol = j.value("boundary_tol", g.boundary_tol);
    return g;
}

inline SuiteConfig suite_from_json(const json& j) {
    detail::require_keys(j, {"schema_version", "seed", "workers", "geometry", "groupoid", "experiments"}, "suite");
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != report_schema_version)
        throw PreconditionError("suite: unsupported schema_version");
    SuiteConfig s;
    s.seed = j.value("seed", s.seed);
    s.workers = j.value("workers", s.workers);
    auto enabled = [&](const char* k) { return j.contains(k) && !(j.at(k).is_boolean() && !j.at(k).get<bool>()); };
    if (enabled("geometry")) s.geometry = geometry_config_from_json(j.at("geometry"));
    if (enabled("groupoid")) s.groupoid = groupoid_config_from_json(j.at("groupoid"));
    std::set<std::string> names;
    if (j.contains("experiments")) {
        for (const auto& e : j.at("experiments")) {
            s.experiments.push_back(experiment_from_json(e));
            if (!names.insert(s.experiments.back().name).second)
                throw PreconditionError("suite: duplicate experiment name '" + s.experiments.back().name + "'");
        }
    }
    return s;
}

inline SuiteConfig load_suite(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw PreconditionError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return suite_from_json(j);
}

// ---------------------------------------------------------------------------
// Defects

/// Symbols entering the defects of one experiment.
template <int D>
struct SymbolSet {
    SymbolGrid<D> f1, f2, bracket, product;
};

/// Defects at one hbar. d1 needs the neighbouring hbar and is assembled by the caller
/// from `norm_f1`.
struct AxiomDefects {
    double hbar = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
    double d4 = 0.0;
    double d5 = 0.0;
    double d5n = 0.0;
    double norm_f1 = 0.0;
    /// Trace defects under further J placements, keyed "d5@placement" and "d5n@placement".
    std::map<std::string, double> extra;
    int lattice_size = 0;
    std::size_t kernel_entries = 0;
    std::size_t flagged = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// ||S - S^H||_HS / ||S||_HS, zero for a zero kernel.
inline double hs_reality_ratio(const SpMat& S) {
    const double n = S.norm();
    if (n == 0.0) return 0.0;
    const SpMat Sa = S.adjoint();
    return SpMat(S - Sa).norm() / n;
}

template <int D>
ChartPtr<D> chart_for(const ExperimentConfig& e) {
    if (e.chart == "euclidean") return std::make_shared<const MetricChart<D>>(euclidean_chart<D>(e.half_width));
    if constexpr (D == 2) {
        if (e.chart == "sphere-polar")
            return std::make_shared<const MetricChart<2>>(
                sphere_polar_chart(e.theta_margin, std::numbers::pi, e.injectivity_floor));
    }
    if constexpr (D == 1) {
        if (e.chart == "conformal-1d")
            return std::make_shared<const MetricChart<1>>(conformal_1d_chart(e.lambda_coeffs));
    }
    throw PreconditionError("experiment '" + e.name + "': chart '" + e.chart + "' is not available in dimension " +
                            std::to_string(D));
}

template <int D>
QuantizationScheme<D> scheme_for(const ExperimentConfig& e) {
    QuantizationScheme<D> s;
    if (e.scheme == "shifted") s = QuantizationScheme<D>::shifted(e.shift);
    else s = QuantizationScheme<D>::from_name(e.scheme);
    s.j_placement = j_placement_from_string(e.j_placement);
    return s;
}

template <int D>
double exponent_for(const QuantizationScheme<D>& s, const std::string& placement) {
    QuantizationScheme<D> t = s;
    t.j_placement = j_placement_from_string(placement);
    return t.quantize_exponent();
}

}  // namespace detail

/// Grids, window and symbol pair of an experiment; random pairs are seeded from `seed`.
template <int D>
SymbolSet<D> experiment_symbols(const ExperimentConfig& e, ChartPtr<D> chart, std::uint64_t seed) {
    ProductGrid<D> qg;
    for (int a = 0; a < D; ++a)
        qg.axes[a] = Grid1::cell_centered(e.points, e.q_center[a] - e.q_half_width[a], e.q_center[a] + e.q_half_width[a]);
    const ProductGrid<D> pg = momentum_grid<D>(e.points, e.p_max);
    Window<D> w = window_for(qg, pg, e.window.sigma_q, e.window.sigma_p);
    w.q_taper_start = e.window.q_taper_start;
    w.q_taper_end = e.window.q_taper_end;
    w.p_taper_start = e.window.p_taper_start;
    w.p_taper_end = e.window.p_taper_end;
    SymbolSet<D> s;
    if (e.symbols == "canonical") {
        std::tie(s.f1, s.f2) = canonical_pair<D>(chart, qg, pg, w, e.offset, e.band);
    } else {
        const auto windowed = [&](std::uint64_t sd) {
            // Low-passing to a third of the band keeps the windowed product inside the band,
            // so the final projection does not leave ringing at the edges of the q box.
            SymbolGrid<D> r = random_symbol<D>(chart, qg, pg, sd, e.band / 3.0);
            const SymbolGrid<D> wv = sample_symbol<D>(
                chart, [&](const Vec<D>& q, const Vec<D>& p) { return cplx(w(q, p)); }, qg, pg);
            r.values = r.values.cwiseProduct(wv.values);
            SymbolGrid<D> out = bandlimit(r, e.band);
            out.values = out.values.real().template cast<cplx>();
            return out;
        };
        s.f1 = windowed(detail::splitmix64(seed));
        s.f2 = windowed(detail::splitmix64(seed + 1));
    }
    s.bracket = poisson_bracket(s.f1, s.f2, bracket_convention_from_string(e.bracket));
    s.product = multiply(s.f1, s.f2);
    return s;
}

/// Defects d2..d5 of one symbol pair at one hbar.
///
/// Norms are taken on the weighted l2 space of the kernel lattice: d2 and d3
/// are largest singular values, evaluated matrix-free on D^{1/2} K D^{1/2};
/// d4 is the Hilbert-Schmidt ratio ||K - K*|| / ||K|| (largest over f1, f2);
/// d5 = |Tr Q(f1) Q(f2) - int f1 f2 dq dp / (2 pi hbar)^n|, and d5n divides it
/// by (2 pi hbar)^{-n} ||f1||_2 ||f2||_2.
template <int D>
AxiomDefects axiom_defects(const ExperimentConfig& e, const QuantizationScheme<D>& scheme, const SymbolSet<D>& s,
                           double hbar) {
    QuantizeOptions<D> qo;
    qo.refine = e.refine;
    qo.support_threshold = e.support_threshold;
    qo.hbar0 = e.hbar0;
    if (!(hbar > 0.0 && hbar <= e.hbar0)) throw PreconditionError("axiom_defects: hbar must lie in (0, hbar0]");
    const FiberCut<D> c1 = fiber_cut_for(s.f1, qo.support_threshold);
    const FiberCut<D> c2 = fiber_cut_for(s.f2, qo.support_threshold);
    const FiberCut<D> cb = fiber_cut_for(s.bracket, qo.support_threshold);
    const FiberCut<D> cp = fiber_cut_for(s.product, qo.support_threshold);
    const auto lattice = lattice_for(s.f1, hbar, qo.refine);
    const KernelGeometry<D> geo = build_geometry(lattice, scheme, hbar, c1.merged(c2).merged(cb).merged(cp), qo);

    const FiberEvaluator<D> E1(s.f1), E2(s.f2), Eb(s.bracket), Ep(s.product);
    const double ex = scheme.quantize_exponent();
    const KernelOperator<D> K1 = quantize_on(geo, E1, ex, &c1);
    const KernelOperator<D> K2 = quantize_on(geo, E2, ex, &c2);
    const SpMat S1 = K1.symmetrized(), S2 = K2.symmetrized();

    AxiomDefects d;
    d.hbar = hbar;
    d.lattice_size = lattice->size();
    d.kernel_entries = geo.entries();
    d.flagged = geo.flagged;
    d.norm_f1 = spectral_norm(as_linear_map(S1));
    d.d4 = std::max(detail::hs_reality_ratio(S1), detail::hs_reality_ratio(S2));

    {
        const SpMat Sb = quantize_on(geo, Eb, ex, &cb).symmetrized();
        const SpMat S1a = S1.adjoint(), S2a = S2.adjoint(), Sba = Sb.adjoint();
        const cplx ih(0.0, hbar);
        const LinearMap m{static_cast<int>(S1.rows()),
                          [&](const CVector& x) -> CVector {
                              return S1 * (S2 * x) - S2 * (S1 * x) - ih * (Sb * x);
                          },
                          [&](const CVector& x) -> CVector {
                              return S2a * (S1a * x) - S1a * (S2a * x) + ih * (Sba * x);
                          }};
        d.d2 = spectral_norm(m) / hbar;
    }
    {
        const SpMat Sp = quantize_on(geo, Ep, ex, &cp).symmetrized();
        const SpMat S1a = S1.adjoint(), S2a = S2.adjoint(), Spa = Sp.adjoint();
        const LinearMap m{static_cast<int>(S1.rows()),
                          [&](const CVector& x) -> CVector { return S1 * (S2 * x) - Sp * x; },
                          [&](const CVector& x) -> CVector { return S2a * (S1a * x) - Spa * x; }};
        d.d3 = spectral_norm(m);
    }

    const double vol = std::pow(2.0 * std::numbers::pi * hbar, -static_cast<double>(D));
    const cplx integral = phase_space_integral(s.f1, s.f2) * vol;
    const double cell = std::sqrt(s.f1.q_grid.cell_volume() * s.f1.p_grid.cell_volume());
    const double scale = vol * s.f1.values.norm() * cell * s.f2.values.norm() * cell;
    auto normalized = [&](double v) { return scale > 0.0 ? v / scale : 0.0; };
    d.d5 = std::abs(op_trace_product(K1, K2) - integral);
    d.d5n = normalized(d.d5);
    for (const auto& placement : e.extra_placements) {
        const double ep = detail::exponent_for(scheme, placement);
        const double v =
            std::abs(op_trace_product(quantize_on(geo, E1, ep, &c1), quantize_on(geo, E2, ep, &c2)) - integral);
        d.extra["d5@" + placement] = v;
        d.extra["d5n@" + placement] = normalized(v);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline std::string norm_kind_of(const std::string& axiom) {
    if (axiom == "d1") return "op-norm difference at adjacent hbar";
    if (axiom == "norm_gap") return "relative gap |Q f1| vs sup|f1|";
    if (axiom == "d2" || axiom == "d3") return "weighted-l2 operator norm";
    if (axiom == "d4") return "Hilbert-Schmidt ratio";
    if (axiom.rfind("d5n", 0) == 0) return "trace defect / ((2 pi hbar)^-n |f1|_2 |f2|_2)";
    return "absolute trace defect";
}

inline std::vector<std::pair<double, double>> series(const std::vector<DefectRow>& rows, const std::string& axiom) {
    std::vector<std::pair<double, double>> v;
    for (const auto& r : rows)
        if (r.axiom == axiom) v.emplace_back(r.hbar, r.defect);
    return v;
}

inline CheckResult evaluate_check(const std::string& experiment, const CheckSpec& c,
                                  const std::vector<DefectRow>& rows, double floor) {
    const std::string name = c.axiom + " " + c.kind;
    const auto pts = series(rows, c.axiom);
    if (pts.empty()) {
        CheckResult r{"experiment:" + experiment, name, std::numeric_limits<double>::quiet_NaN(), 0.0, "", false,
                      "no defects recorded for axiom '" + c.axiom + "'"};
        return r;
    }
    const std::string g = "experiment:" + experiment;
    if (c.kind == "max") {
        double m = 0.0;
        for (const auto& p : pts) m = std::max(m, p.second);
        return make_check(g, name, m, "<=", c.max);
    }
    if (c.kind == "last_max") return make_check(g, name, pts.back().second, "<=", c.max);
    if (c.kind == "lipschitz") {
        const auto all = series(rows, "hbar_grid");
        double m = 0.0;
        for (const auto& [h, v] : pts) {
            // d1 at hbar_k compares with hbar_{k-1}
            auto it = std::find_if(all.begin(), all.end(), [&](const auto& q) { return q.first == h; });
            if (it == all.begin() || it == all.end()) continue;
            m = std::max(m, v / std::abs(std::prev(it)->first - h));
        }
        return make_check(g, name, m, "<=", c.max);
    }
    if (c.kind == "ratio_at_smallest") {
        const auto ref = series(rows, c.reference);
        if (ref.empty() || ref.back().first != pts.back().first)
            return {g, name, std::numeric_limits<double>::quiet_NaN(), c.min, ">=", false,
                    "reference axiom '" + c.reference + "' missing at the smallest hbar"};
        const double den = ref.back().second;
        const double ratio = den > 0.0 ? pts.back().second / den : std::numeric_limits<double>::infinity();
        return make_check(g, name + " vs " + c.reference, ratio, ">=", c.min);
    }
    const RateFit f = fit_rate(pts, floor);
    const std::string info = "verdict " + f.verdict + ", " + std::to_string(f.points) + " points";
    if (c.kind == "min_slope") {
        if (f.verdict == "exact") return {g, name, std::numeric_limits<double>::infinity(), c.min, ">=", true, info};
        return make_check(g, name, f.verdict == "fit" ? f.slope : std::numeric_limits<double>::quiet_NaN(), ">=",
                          c.min, info);
    }
    if (c.kind == "max_slope") {
        return make_check(g, name, f.verdict == "fit" ? f.slope : std::numeric_limits<double>::quiet_NaN(), "<=",
                          c.max, info);
    }
    // slope_range
    CheckResult r = make_check(g, name, f.verdict == "fit" ? f.slope : std::numeric_limits<double>::quiet_NaN(), ">=",
                               c.min, info + ", range [" + std::to_string(c.min) + ", " + std::to_string(c.max) + "]");
    r.pass = f.verdict == "fit" && f.slope >= c.min && f.slope <= c.max;
    r.relation = "in";
    return r;
}

template <int D>
json provenance_of(const ExperimentConfig& e, const QuantizationScheme<D>& s, std::uint64_t seed) {
    return json{{"chart", e.chart},
                {"dim", D},
                {"scheme", s.name},
                {"j_placement", e.j_placement},
                {"grid_points", e.points},
                {"q_center", e.q_center},
                {"q_half_width", e.q_half_width},
                {"p_max", e.p_max},
                {"band", e.band},
                {"symbols", e.symbols},
                {"offset", e.offset},
                {"bracket", e.bracket},
                {"seed", seed},
                {"norms", "d2, d3: largest singular value on the weighted l2 space of the kernel lattice; "
                          "d4: Hilbert-Schmidt ratio; d5: absolute trace defect"},
                {"quantifiers", "axioms are checked on the configured symbol pair only, not on all of the "
                                "band-limited symbol class"}};
}

}  // namespace detail

/// Prepared state of an experiment: per-hbar jobs run `run_hbar` independently.
struct ExperimentPlan {
    ExperimentConfig config;
    std::uint64_t seed = 0;
    std::function<AxiomDefects(double)> run_hbar;
    json provenance;
};

namespace detail {

template <int D>
ExperimentPlan plan_for(const ExperimentConfig& e, std::uint64_t seed) {
    const ChartPtr<D> chart = chart_for<D>(e);
    const QuantizationScheme<D> scheme = scheme_for<D>(e);
    auto symbols = std::make_shared<const SymbolSet<D>>(experiment_symbols<D>(e, chart, seed));
    ExperimentPlan p;
    p.config = e;
    p.seed = seed;
    p.provenance = provenance_of<D>(e, scheme, seed);
    p.run_hbar = [e, scheme, symbols](double h) { return axiom_defects<D>(e, scheme, *symbols, h); };
    return p;
}

}  // namespace detail

inline ExperimentPlan plan_experiment(const ExperimentConfig& e, std::uint64_t seed) {
    return e.dim == 1 ? detail::plan_for<1>(e, seed) : detail::plan_for<2>(e, seed);
}

/// Builds defect rows, rates and checks from per-hbar defects ordered by decreasing hbar.
/// `sup_f1` is the sup norm of the first symbol, the hbar -> 0 limit of its quantized norm.
inline ExperimentResult assemble_experiment(const ExperimentConfig& e, const std::vector<AxiomDefects>& per_hbar,
                                            double sup_f1) {
    ExperimentResult r;
    r.name = e.name;
    auto add = [&](const std::string& axiom, double h, double v) {
        r.defects.push_back({e.name, axiom, h, v, detail::norm_kind_of(axiom)});
    };
    for (std::size_t k = 0; k < per_hbar.size(); ++k) {
        const AxiomDefects& d = per_hbar[k];
        if (k > 0) add("d1", d.hbar, std::abs(d.norm_f1 - per_hbar[k - 1].norm_f1));
    }
    for (const auto& d : per_hbar) add("d2", d.hbar, d.d2);
    for (const auto& d : per_hbar) add("d3", d.hbar, d.d3);
    for (const auto& d : per_hbar) add("d4", d.hbar, d.d4);
    for (const auto& d : per_hbar) add("d5", d.hbar, d.d5);
    for (const auto& d : per_hbar) add("d5n", d.hbar, d.d5n);
    if (!per_hbar.empty()) {
        for (const auto& [key, unused] : per_hbar.front().extra) {
            (void)unused;
            for (const auto& d : per_hbar) add(key, d.hbar, d.extra.at(key));
        }
    }
    for (const auto& d : per_hbar)
        add("norm_gap", d.hbar, sup_f1 > 0.0 ? std::abs(d.norm_f1 - sup_f1) / sup_f1 : 0.0);
    std::vector<std::string> axioms;
    for (const auto& row : r.defects)
        if (std::find(axioms.begin(), axioms.end(), row.axiom) == axioms.end()) axioms.push_back(row.axiom);
    for (const auto& a : axioms) r.rates.push_back({e.name, a, fit_rate(detail::series(r.defects, a), e.floor)});

    // auxiliary series used by the checks but not written as defects
    std::vector<DefectRow> aux = r.defects;
    for (const auto& d : per_hbar) aux.push_back({e.name, "hbar_grid", d.hbar, 0.0, ""});
    for (const auto& c : e.checks) r.checks.push_back(detail::evaluate_check(e.name, c, aux, e.floor));
    return r;
}

/// Sup norm of the first symbol of an experiment, for the hbar -> 0 endpoint of d1.
inline double experiment_sup_f1(const ExperimentConfig& e, std::uint64_t seed) {
    if (e.dim == 1) return experiment_symbols<1>(e, detail::chart_for<1>(e), seed).f1.values.cwiseAbs().maxCoeff();
    return experiment_symbols<2>(e, detail::chart_for<2>(e), seed).f1.values.cwiseAbs().maxCoeff();
}

/// Runs jobs 0..n-1 on `workers` threads; each index is processed exactly once.
inline void run_parallel(int n, int workers, const std::function<void(int)>& job) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) job(i);
        });
    for (auto& t : pool) t.join();
}

/// Runs the configured geometry checks, groupoid checks and axiom experiments.
/// Errors are recorded per experiment and do not stop the suite.
inline SuiteReport run_suite(const SuiteConfig& cfg, const std::function<void(const std::string&)>& log = {}) {
    SuiteReport rep;
    rep.seed = cfg.seed;
    auto note = [&](const std::string& m) {
        if (log) log(m);
    };
    if (cfg.geometry) {
        note("geometry checks");
        try {
            rep.geometry = geometry_checks(*cfg.geometry);
        } catch (const std::exception& ex) {
            rep.geometry_error = ex.what();
        }
    }
    if (cfg.groupoid) {
        note("groupoid checks");
        try {
            rep.groupoid = groupoid_checks(*cfg.groupoid);
        } catch (const std::exception& ex) {
            rep.groupoid_error = ex.what();
        }
    }

    const int ne = static_cast<int>(cfg.experiments.size());
    std::vector<ExperimentPlan> plans(ne);
    std::vector<std::string> errors(ne);
    std::vector<double> seconds(ne, 0.0);
    for (int k = 0; k < ne; ++k) {
        const std::uint64_t seed = cfg.seed + 2ULL * static_cast<std::uint64_t>(k);
        try {
            plans[k] = plan_experiment(cfg.experiments[k], seed);
        } catch (const std::exception& ex) {
            errors[k] = ex.what();
        }
    }
    struct Job {
        int experiment;
        int index;
    };
    std::vector<Job> jobs;
    std::vector<std::vector<AxiomDefects>> results(ne);
    for (int k = 0; k < ne; ++k) {
        if (!errors[k].empty()) continue;
        results[k].resize(cfg.experiments[k].hbar.size());
        for (int i = 0; i < static_cast<int>(cfg.experiments[k].hbar.size()); ++i) jobs.push_back({k, i});
    }
    std::mutex mu;
    run_parallel(static_cast<int>(jobs.size()), cfg.workers, [&](int j) {
        const Job job = jobs[j];
        {
            std::lock_guard<std::mutex> lock(mu);
            if (!errors[job.experiment].empty()) return;
        }
        const double h = cfg.experiments[job.experiment].hbar[job.index];
        note(cfg.experiments[job.experiment].name + ": hbar " + std::to_string(h));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            AxiomDefects d = plans[job.experiment].run_hbar(h);
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::lock_guard<std::mutex> lock(mu);
            results[job.experiment][job.index] = std::move(d);
            seconds[job.experiment] += dt;
        } catch (const std::exception& ex) {
            std::lock_guard<std::mutex> lock(mu);
            if (errors[job.experiment].empty())
                errors[job.experiment] = "hbar " + std::to_string(h) + ": " + ex.what();
        }
    });

    for (int k = 0; k < ne; ++k) {
        const ExperimentConfig& e = cfg.experiments[k];
        ExperimentResult r;
        if (errors[k].empty()) {
            try {
                r = assemble_experiment(e, results[k], experiment_sup_f1(e, plans[k].seed));
                json sizes = json::array();
                for (const auto& d : results[k])
                    sizes.push_back({{"hbar", d.hbar},
                                     {"lattice_nodes", d.lattice_size},
                                     {"kernel_entries", d.kernel_entries},
                                     {"flagged", d.flagged}});
                r.provenance = plans[k].provenance;
                r.provenance["lattices"] = sizes;
            } catch (const std::exception& ex) {
                r.error = ex.what();
            }
        }
        r.name = e.name;
        if (!errors[k].empty()) r.error = errors[k];
        r.seconds = seconds[k];
        rep.experiments.push_back(std::move(r));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) {
        if (c == '"') o += '"';
        o += c;
    }
    return o + "\"";
}

inline json number_json(double v) {
    if (std::isfinite(v)) return v;
    return fmt(v);
}

inline json checks_json(const std::vector<CheckResult>& v) {
    json a = json::array();
    for (const auto& c : v)
        a.push_back({{"group", c.group},
                     {"name", c.name},
                     {"value", number_json(c.value)},
                     {"relation", c.relation},
                     {"threshold", number_json(c.threshold)},
                     {"pass", c.pass},
                     {"detail", c.detail}});
    return a;
}

}  // namespace detail

/// Defect table: one row per (experiment, axiom, hbar), sorted deterministically.
inline std::string defects_csv(const SuiteReport& rep) {
    std::vector<DefectRow> rows;
    for (const auto& e : rep.experiments) rows.insert(rows.end(), e.defects.begin(), e.defects.end());
    std::stable_sort(rows.begin(), rows.end(), [](const DefectRow& a, const DefectRow& b) {
        if (a.experiment != b.experiment) return a.experiment < b.experiment;
        if (a.axiom != b.axiom) return a.axiom < b.axiom;
        return a.hbar > b.hbar;
    });
    std::string s = "experiment,axiom,hbar,defect,norm_kind\n";
    for (const auto& r : rows)
        s += detail::csv_field(r.experiment) + "," + r.axiom + "," + detail::fmt(r.hbar) + "," +
             detail::fmt(r.defect) + "," + detail::csv_field(r.norm_kind) + "\n";
    return s;
}

inline std::string rates_csv(const SuiteReport& rep) {
    std::vector<RateRow> rows;
    for (const auto& e : rep.experiments) rows.insert(rows.end(), e.rates.begin(), e.rates.end());
    std::stable_sort(rows.begin(), rows.end(), [](const RateRow& a, const RateRow& b) {
        return a.experiment != b.experiment ? a.experiment < b.experiment : a.axiom < b.axiom;
    });
    std::string s = "experiment,axiom,slope,intercept,residual,verdict\n";
    for (const auto& r : rows)
        s += detail::csv_field(r.experiment) + "," + r.axiom + "," + detail::fmt(r.fit.slope) + "," +
             detail::fmt(r.fit.intercept) + "," + detail::fmt(r.fit.residual) + "," + r.fit.verdict + "\n";
    return s;
}

inline json report_json(const SuiteReport& rep) {
    json j;
    j["schema_version"] = report_schema_version;
    j["seed"] = rep.seed;
    j["pass"] = rep.pass();
    j["geometry"] = {{"checks", detail::checks_json(rep.geometry)}, {"error", rep.geometry_error}};
    j["groupoid"] = {{"checks", detail::checks_json(rep.groupoid)}, {"error", rep.groupoid_error}};
    json ex = json::array();
    for (const auto& e : rep.experiments) {
        json rates = json::array();
        for (const auto& r : e.rates)
            rates.push_back({{"axiom", r.axiom},
                             {"slope", detail::number_json(r.fit.slope)},
                             {"intercept", detail::number_json(r.fit.intercept)},
                             {"residual", detail::number_json(r.fit.residual)},
                             {"points", r.fit.points},
                             {"verdict", r.fit.verdict}});
        ex.push_back({{"name", e.name},
                      {"pass", e.pass()},
                      {"error", e.error},
                      {"seconds", e.seconds},
                      {"rates", rates},
                      {"checks", detail::checks_json(e.checks)},
                      {"provenance", e.provenance}});
    }
    j["experiments"] = ex;
    return j;
}

/// Writes report.json, defects.csv and rates.csv into `dir`.
inline void write_reports(const SuiteReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream o(dir / name, std::ios::binary);
        if (!o) throw PreconditionError("cannot write '" + (dir / name).string() + "'");
        o << text;
    };
    put("report.json", report_json(rep).dump(2) + "\n");
    put("defects.csv", defects_csv(rep));
    put("rates.csv", rates_csv(rep));
}

}  // namespace tgq

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tgq/tgq.hpp"

namespace {

using tgq::json;

struct CommonOptions {
    std::string config;
    std::string out = "tgq-out";
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
    auto* c = cmd->add_option("--config", o.config, "experiment configuration (JSON)");
    if (config_required) c->required();
    c->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", o.seed, "override the configured seed");
    cmd->add_option("--workers", o.workers, "number of worker threads")->check(CLI::PositiveNumber);
}

tgq::SuiteConfig load(const CommonOptions& o) {
    tgq::SuiteConfig cfg = o.config.empty() ? tgq::SuiteConfig{} : tgq::load_suite(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    return cfg;
}

void print_checks(const std::vector<tgq::CheckResult>& checks) {
    for (const auto& c : checks)
        std::cout << (c.pass ? "  PASS  " : "  FAIL  ") << c.group << " | " << c.name << ": " << c.value << ' '
                  << c.relation << ' ' << c.threshold << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
}

int finish(const tgq::SuiteReport& rep, const std::string& out) {
    tgq::write_reports(rep, out);
    print_checks(rep.geometry);
    if (!rep.geometry_error.empty()) std::cout << "  ERROR geometry: " << rep.geometry_error << '\n';
    print_checks(rep.groupoid);
    if (!rep.groupoid_error.empty()) std::cout << "  ERROR groupoid: " << rep.groupoid_error << '\n';
    for (const auto& e : rep.experiments) {
        std::cout << (e.pass() ? "PASS  " : "FAIL  ") << e.name << "  (" << e.seconds << " s)\n";
        if (!e.error.empty()) std::cout << "  ERROR " << e.error << '\n';
        print_checks(e.checks);
    }
    std::cout << (rep.pass() ? "all checks passed" : "some checks failed") << "; reports in " << out << '\n';
    return rep.pass() ? 0 : 1;
}

template <int D>
void dump_kernel(const tgq::ExperimentConfig& e, std::uint64_t seed, double hbar, const std::string& which,
                 const std::filesystem::path& path) {
    const auto chart = tgq::detail::chart_for<D>(e);
    const auto scheme = tgq::detail::scheme_for<D>(e);
    const auto s = tgq::experiment_symbols<D>(e, chart, seed);
    const tgq::SymbolGrid<D>& a = which == "f1" ? s.f1 : which == "f2" ? s.f2 : which == "bracket" ? s.bracket : s.product;
    tgq::QuantizeOptions<D> qo;
    qo.refine = e.refine;
    qo.support_threshold = e.support_threshold;
    qo.hbar0 = e.hbar0;
    const tgq::KernelOperator<D> K = tgq::quantize(scheme, *chart, a, hbar, qo);
    std::ofstream o(path);
    if (!o) throw tgq::PreconditionError("cannot write '" + path.string() + "'");
    o.precision(17);
    o << "i,j";
    for (int d = 0; d < D; ++d) o << ",x" << d;
    for (int d = 0; d < D; ++d) o << ",y" << d;
    o << ",re,im\n";
    const auto& L = *K.lattice;
    for (int i = 0; i < K.kernel.outerSize(); ++i) {
        const tgq::Vec<D> x = L.node(i);
        for (tgq::SpMat::InnerIterator it(K.kernel, i); it; ++it) {
            const tgq::Vec<D> y = L.node(static_cast<int>(it.col()));
            o << i << ',' << it.col();
            for (int d = 0; d < D; ++d) o << ',' << x[d];
            for (int d = 0; d < D; ++d) o << ',' << y[d];
            o << ',' << it.value().real() << ',' << it.value().imag() << '\n';
        }
    }
    std::cout << "wrote " << K.kernel.nonZeros() << " kernel entries on " << L.size() << " lattice nodes to " << path
              << " (flagged nodes: " << K.flagged << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tangent groupoid quantization: axiom harness"};
    app.require_subcommand(1);

    CommonOptions ax, geo, gpd, dk;
    auto* axioms = app.add_subcommand("axioms", "run the configured suite and write report.json, defects.csv, rates.csv");
    add_common(axioms, ax, true);
    auto* geometry = app.add_subcommand("geometry-check", "Jacobian, triangle-defect and exp/log checks");
    add_common(geometry, geo, false);
    auto* groupoid = app.add_subcommand("groupoid-check", "groupoid rules, chart roundtrip, boundary continuity");
    add_common(groupoid, gpd, false);
    auto* dump = app.add_subcommand("dump-kernel", "write the kernel of one symbol of an experiment as CSV");
    add_common(dump, dk, true);
    std::string experiment, which = "f1";
    double hbar = -1.0;
    dump->add_option("--experiment", experiment, "experiment name (default: the first)");
    dump->add_option("--hbar", hbar, "hbar (default: the first of the experiment)");
    dump->add_option("--symbol", which, "f1, f2, bracket or product")
        ->check(CLI::IsMember({"f1", "f2", "bracket", "product"}))
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (axioms->parsed()) {
            const tgq::SuiteConfig cfg = load(ax);
            const tgq::SuiteReport rep = tgq::run_suite(cfg, [](const std::string& m) { std::cerr << "... " << m << '\n'; });
            return finish(rep, ax.out);
        }
        if (geometry->parsed()) {
            tgq::SuiteConfig cfg = load(geo);
            tgq::GeometryCheckConfig g = cfg.geometry.value_or(tgq::GeometryCheckConfig{});
            if (geo.seed) g.seed = *geo.seed;
            tgq::SuiteReport rep;
            rep.seed = g.seed;
            rep.geometry = tgq::geometry_checks(g);
            return finish(rep, geo.out);
        }
        if (groupoid->parsed()) {
            tgq::SuiteConfig cfg = load(gpd);
            tgq::GroupoidCheckConfig g = cfg.groupoid.value_or(tgq::GroupoidCheckConfig{});
            if (gpd.seed) g.seed = *gpd.seed;
            tgq::SuiteReport rep;
            rep.seed = g.seed;
            rep.groupoid = tgq::groupoid_checks(g);
            return finish(rep, gpd.out);
        }
        if (dump->parsed()) {
            const tgq::SuiteConfig cfg = load(dk);
            if (cfg.experiments.empty()) throw tgq::PreconditionError("the configuration has no experiments");
            std::size_t k = 0;
            if (!experiment.empty()) {
                while (k < cfg.experiments.size() && cfg.experiments[k].name != experiment) ++k;
                if (k == cfg.experiments.size())
                    throw tgq::PreconditionError("no experiment named '" + experiment + "'");
            }
            const tgq::ExperimentConfig& e = cfg.experiments[k];
            const double h = hbar > 0.0 ? hbar : e.hbar.front();
            const std::uint64_t seed = cfg.seed + 2ULL * k;
            std::filesystem::create_directories(dk.out);
            const std::filesystem::path path = std::filesystem::path(dk.out) / "kernel.csv";
            if (e.dim == 1) dump_kernel<1>(e, seed, h, which, path);
            else dump_kernel<2>(e, seed, h, which, path);
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tgq/harness.hpp"

using namespace tgq;

namespace {

std::vector<std::pair<double, double>> sample(const std::function<double(double)>& f) {
    std::vector<std::pair<double, double>> v;
    for (double h : geometric_list(0.4, 0.003125, 8)) v.emplace_back(h, f(h));
    return v;
}

json tiny_experiment(const std::string& name) {
    return json{{"name", name},
                {"chart", {{"name", "euclidean"}, {"dim", 1}}},
                {"hbar", {0.4, 0.2, 0.1, 0.05}},
                {"grid", {{"points", 16}, {"p_max", 2.0}}},
                {"symbols", {{"kind", "canonical"}, {"offset", 0.5}}},
                {"checks", json::array({json{{"axiom", "d4"}, {"kind", "max"}, {"max", 1e-10}}})}};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(FitRate, PureQuadratic) {
    const RateFit f = fit_rate(sample([](double h) { return 3.7 * h * h; }));
    EXPECT_EQ(f.verdict, "fit");
    EXPECT_NEAR(f.slope, 2.0, 1e-10);
    EXPECT_NEAR(std::exp(f.intercept), 3.7, 1e-9);
    EXPECT_LT(f.residual, 1e-12);
    EXPECT_EQ(f.points, 8);
}

TEST(FitRate, LinearWithCubicCorrection) {
    const RateFit f = fit_rate(sample([](double h) { return 0.8 * h + 0.2 * h * h * h; }));
    EXPECT_GE(f.slope, 0.95);
    EXPECT_LE(f.slope, 1.05);
}

TEST(FitRate, AllZeroIsExact) {
    EXPECT_EQ(fit_rate(sample([](double) { return 0.0; })).verdict, "exact");
    EXPECT_EQ(fit_rate(sample([](double h) { return 1e-16 * h; }), 1e-15).verdict, "exact");
}

TEST(FitRate, FloorExcludesPointsAndFewPointsAreInsufficient) {
    auto pts = sample([](double h) { return h * h; });
    const RateFit f = fit_rate(pts, 5e-3);
    EXPECT_EQ(f.points, 3);
    EXPECT_EQ(f.verdict, "insufficient-data");
    EXPECT_THROW(fit_rate({{0.1, -1.0}}), PreconditionError);
    EXPECT_THROW(fit_rate({{0.0, 1.0}}), PreconditionError);
}

TEST(GeometricList, Endpoints) {
    const auto v = geometric_list(0.4, 0.003125, 8);
    ASSERT_EQ(v.size(), 8u);
    EXPECT_DOUBLE_EQ(v.front(), 0.4);
    EXPECT_NEAR(v.back(), 0.003125, 1e-17);
    EXPECT_NEAR(v[1], 0.2, 1e-15);
}

TEST(Config, ShippedConfigsParse) {
    for (const char* f : {"default.json", "flat.json", "sphere.json", "full.json"}) {
        const SuiteConfig s = load_suite(std::filesystem::path(TGQ_CONFIG_DIR) / f);
        EXPECT_FALSE(s.experiments.empty() && !s.geometry) << f;
    }
    const SuiteConfig sphere = load_suite(std::filesystem::path(TGQ_CONFIG_DIR) / "sphere.json");
    ASSERT_EQ(sphere.experiments.size(), 1u);
    EXPECT_EQ(sphere.experiments[0].chart, "sphere-polar");
    EXPECT_EQ(sphere.experiments[0].dim, 2);
    EXPECT_EQ(sphere.experiments[0].points, 48);
}

TEST(Config, DefaultsAndHbarRange) {
    const ExperimentConfig e = experiment_from_json(
        json{{"name", "x"}, {"hbar", {{"start", 0.3}, {"end", 0.0375}, {"count", 4}}}});
    EXPECT_EQ(e.chart, "euclidean");
    EXPECT_EQ(e.scheme, "moyal");
    EXPECT_EQ(e.points, 64);
    ASSERT_EQ(e.hbar.size(), 4u);
    EXPECT_NEAR(e.hbar[1], 0.15, 1e-15);
    EXPECT_EQ(e.q_half_width, std::vector<double>{4.0});
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(experiment_from_json(json{{"name", "x"}, {"hbar_list", {0.1}}}), PreconditionError);
    EXPECT_THROW(experiment_from_json(json{{"name", "x"}, {"hbar", {0.1, 0.2}}}), PreconditionError);
    EXPECT_THROW(experiment_from_json(json{{"name", "x"}, {"hbar", {2.0}}}), PreconditionError);
    EXPECT_THROW(experiment_from_json(json{{"name", "x"}, {"j_placement", "everywhere"}}), PreconditionError);
    EXPECT_THROW(experiment_from_json(json{{"name", "x"}, {"symbols", {{"kind", "noise"}}}}),
                 PreconditionError);
    EXPECT_THROW(suite_from_json(json{{"schema_version", 2}}), PreconditionError);
    EXPECT_THROW(suite_from_json(json{{"experiments", {tiny_experiment("a"), tiny_experiment("a")}}}),
                 PreconditionError);
    EXPECT_THROW(load_suite("/nonexistent/config.json"), PreconditionError);
}

TEST(Checks, KindsEvaluateOnSyntheticRows) {
    std::vector<DefectRow> rows;
    for (const auto& [h, d] : sample([](double h) { return h * h; })) {
        rows.push_back({"e", "d2", h, d, ""});
        rows.push_back({"e", "d5n", h, 1e-3 * h * h, ""});
        rows.push_back({"e", "hbar_grid", h, 0.0, ""});
    }
    auto check = [&](CheckSpec c) { return detail::evaluate_check("e", c, rows, 0.0); };
    EXPECT_TRUE(check({"d2", "slope_range", 1.9, 2.1, ""}).pass);
    EXPECT_FALSE(check({"d2", "slope_range", 0.9, 1.1, ""}).pass);
    EXPECT_TRUE(check({"d2", "min_slope", 1.8, INFINITY, ""}).pass);
    EXPECT_FALSE(check({"d2", "max_slope", -INFINITY, 0.5, ""}).pass);
    EXPECT_TRUE(check({"d2", "max", -INFINITY, 0.17, ""}).pass);
    EXPECT_FALSE(check({"d2", "max", -INFINITY, 0.15, ""}).pass);
    EXPECT_TRUE(check({"d2", "last_max", -INFINITY, 1e-5, ""}).pass);
    const auto r = check({"d2", "ratio_at_smallest", 999.0, INFINITY, "d5n"});
    EXPECT_NEAR(r.value, 1000.0, 1e-9);
    EXPECT_TRUE(r.pass);
    EXPECT_FALSE(check({"d3", "max", -INFINITY, 1.0, ""}).pass);
}

TEST(Suite, EmptySuitePasses) {
    const SuiteReport rep = run_suite(SuiteConfig{});
    EXPECT_TRUE(rep.pass());
    EXPECT_TRUE(rep.experiments.empty());
}

TEST(Suite, ErrorsAreRecordedPerExperiment) {
    SuiteConfig cfg;
    ExperimentConfig bad = experiment_from_json(tiny_experiment("bad"));
    bad.q_half_width = {200.0};  // outside the chart domain
    cfg.experiments.push_back(bad);
    cfg.experiments.push_back(experiment_from_json(tiny_experiment("good")));
    const SuiteReport rep = run_suite(cfg);
    ASSERT_EQ(rep.experiments.size(), 2u);
    EXPECT_FALSE(rep.experiments[0].error.empty());
    EXPECT_TRUE(rep.experiments[1].pass()) << rep.experiments[1].error;
    EXPECT_FALSE(rep.pass());
}

TEST(Suite, ReportsAreDeterministic) {
    SuiteConfig cfg = suite_from_json(json{{"experiments", {tiny_experiment("t1"), tiny_experiment("t2")}}});
    const auto dir = std::filesystem::temp_directory_path() / "tgq_harness_test";
    std::filesystem::remove_all(dir);
    cfg.workers = 1;
    write_reports(run_suite(cfg), dir / "a");
    cfg.workers = 2;
    write_reports(run_suite(cfg), dir / "b");
    for (const char* f : {"defects.csv", "rates.csv"}) {
        const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, b) << f;
    }
    const json rep = json::parse(slurp(dir / "a" / "report.json"));
    EXPECT_EQ(rep.at("schema_version"), report_schema_version);
    EXPECT_TRUE(rep.at("pass").get<bool>());
    EXPECT_EQ(rep.at("experiments").size(), 2u);
    const std::string header = slurp(dir / "a" / "defects.csv").substr(0, 40);
    EXPECT_EQ(header.rfind("experiment,axiom,hbar,defect", 0), 0u) << header;
    std::filesystem::remove_all(dir);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tgq/chart.hpp"

using namespace tgq;

TEST(SphereChart, MetricAndDensity) {
    const MetricChart<2> c = sphere_polar_chart();
    const Vec<2> q(std::numbers::pi / 6, 0.4);
    const Mat<2> g = c.metric(q);
    EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
    EXPECT_NEAR(g(1, 1), 0.25, 1e-15);
    EXPECT_EQ(g(0, 1), 0.0);
    EXPECT_NEAR(volume_density(c, q), 0.5, 1e-15);
    EXPECT_NO_THROW(c.validate());
}

TEST(SphereChart, ChristoffelSymbols) {
    const MetricChart<2> c = sphere_polar_chart();
    const auto G = christoffel(c, Vec<2>(std::numbers::pi / 4, 0.0));
    // Gamma^theta_phi,phi = -sin cos, Gamma^phi_theta,phi = cot
    EXPECT_NEAR(G[0](1, 1), -0.5, 1e-14);
    EXPECT_NEAR(G[1](0, 1), 1.0, 1e-14);
    EXPECT_NEAR(G[1](1, 0), 1.0, 1e-14);
    EXPECT_NEAR(G[0](0, 0), 0.0, 1e-15);
    EXPECT_NEAR(G[1](1, 1), 0.0, 1e-15);
}

TEST(SphereChart, FiniteDifferenceFallbackMatchesAnalyticDerivatives) {
    MetricChart<2> analytic = sphere_polar_chart();
    MetricChart<2> numeric = analytic;
    numeric.metric_grad_fn = nullptr;
    numeric.metric_hess_fn = nullptr;
    const Vec<2> q(1.1, -0.3);
    const auto ga = analytic.metric_grad(q), gn = numeric.metric_grad(q);
    for (int k = 0; k < 2; ++k) EXPECT_LT((ga[k] - gn[k]).norm(), 1e-9);
    const auto ha = analytic.metric_hess(q), hn = numeric.metric_hess(q);
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) EXPECT_LT((ha[k][l] - hn[k][l]).norm(), 1e-6);
}

TEST(SphereChart, DomainIsEnforced) {
    const MetricChart<2> c = sphere_polar_chart(0.3);
    EXPECT_THROW(volume_density(c, Vec<2>(0.1, 0.0)), DomainError);
    EXPECT_THROW(christoffel(c, Vec<2>(1.0, 4.0)), DomainError);
}

TEST(EuclideanChart, IsFlat) {
    const MetricChart<2> c = euclidean_chart<2>();
    EXPECT_TRUE(c.flat);
    const auto G = christoffel(c, Vec<2>(3.0, -7.0));
    for (const auto& m : G) EXPECT_EQ(m.norm(), 0.0);
    EXPECT_EQ(volume_density(c, Vec<2>(1.0, 2.0)), 1.0);
}

TEST(ConformalChart, MetricFollowsLambda) {
    const MetricChart<1> c = conformal_1d_chart({0.0, 0.1, -0.05});
    const double x = 0.7;
    const double lam = 0.1 * x - 0.05 * x * x;
    EXPECT_NEAR(c.metric(Vec<1>(x))(0, 0), std::exp(2 * lam), 1e-15);
    // Gamma = lambda'
    EXPECT_NEAR(christoffel(c, Vec<1>(x))[0](0, 0), 0.1 - 0.1 * x, 1e-14);
}

TEST(ChartValidation, RejectsIndefiniteMetric) {
    MetricChart<1> c = euclidean_chart<1>(1.0);
    c.metric_fn = [](const Vec<1>& q) { return Mat<1>(q[0]); };
    EXPECT_THROW(c.validate(), PreconditionError);
}

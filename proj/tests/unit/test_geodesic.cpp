#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tgq/geodesic.hpp"

using namespace tgq;

namespace {

// High-accuracy integration for comparisons with closed-form values.
GeodesicOptions fine() {
    GeodesicOptions o;
    o.steps_per_unit = 2048;
    return o;
}

}  // namespace

// Reference values below come from great-circle formulas in the embedding R^3
// evaluated at 50 digits, with central differences for derivatives.

TEST(Geodesic, SphereEndpointMatchesGreatCircle) {
    const MetricChart<2> c = sphere_polar_chart();
    const Vec<2> x = exp_map(c, TangentPoint<2>{Vec<2>(std::numbers::pi / 4, 0.0), Vec<2>(0.3, 0.2)}, fine());
    EXPECT_NEAR(x[0], 1.0924555453013126, 1e-12);
    EXPECT_NEAR(x[1], 0.15704155239781638, 1e-12);
}

TEST(Geodesic, DefaultStepsAreAccurateToRk4Order) {
    const MetricChart<2> c = sphere_polar_chart();
    const Vec<2> x = exp_map(c, TangentPoint<2>{Vec<2>(std::numbers::pi / 4, 0.0), Vec<2>(0.3, 0.2)});
    EXPECT_NEAR(x[0], 1.0924555453013126, 1e-9);
    EXPECT_NEAR(x[1], 0.15704155239781638, 1e-9);
}

TEST(Geodesic, SphereVariationMatrix) {
    const MetricChart<2> c = sphere_polar_chart();
    const auto jd = jacobi_fields(c, TangentPoint<2>{Vec<2>(std::numbers::pi / 3, 0.1), Vec<2>(0.25, -0.4)}, 1.0, fine());
    Mat<2> ref;
    ref << 0.97311881790424169, -0.12812855536782018, 0.12204593925187239, 0.87420717411638113;
    EXPECT_LT((jd.h_tilde - ref).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Geodesic, EquatorVariationIsDiagonal) {
    // Along the equator the transverse Jacobi field is sin(t |X|) / |X|.
    const MetricChart<2> c = sphere_polar_chart();
    const auto jd = jacobi_fields(c, TangentPoint<2>{Vec<2>(std::numbers::pi / 2, 0.0), Vec<2>(0.0, 0.2)}, 1.0, fine());
    EXPECT_NEAR(jd.h_tilde(0, 0), std::sin(0.2) / 0.2, 1e-12);
    EXPECT_NEAR(jd.h_tilde(1, 1), 1.0, 1e-12);
    EXPECT_NEAR(jd.h_tilde(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(jd.h_tilde(1, 0), 0.0, 1e-12);
}

TEST(Geodesic, ConformalLineEndpoint) {
    // Arc length: integral of exp(lambda) from q to x equals |X| exp(lambda(q)).
    const MetricChart<1> c = conformal_1d_chart({0.0, 0.1, -0.05});
    const Vec<1> x = exp_map(c, TangentPoint<1>{Vec<1>(0.5), Vec<1>(0.7)}, fine());
    EXPECT_NEAR(x[0], 1.1935006891315567, 1e-12);
}

TEST(Geodesic, LogInvertsExp) {
    const MetricChart<2> c = sphere_polar_chart();
    const Vec<2> q(std::numbers::pi / 3, 0.1);
    const Vec<2> x(1.3231901041136557, -0.25387789488424502);
    const Vec<2> X = log_map(c, q, x, fine());
    EXPECT_NEAR(X[0], 0.25, 1e-11);
    EXPECT_NEAR(X[1], -0.4, 1e-11);
    EXPECT_LT((exp_map(c, TangentPoint<2>{q, X}, fine()) - x).norm(), 1e-13);
}

TEST(Geodesic, FlowIsReversible) {
    const MetricChart<2> c = sphere_polar_chart();
    const Vec<2> q(1.2, 0.3), X(0.4, -0.5);
    const auto path = geodesic_flow(c, TangentPoint<2>{q, X}, 1.0);
    const auto back = geodesic_flow(c, TangentPoint<2>{path.end().position, Vec<2>(-path.end().velocity)}, 1.0);
    EXPECT_LT((back.end().position - q).norm(), 1e-9);
}

TEST(Geodesic, InjectivityFloorIsEnforced) {
    const MetricChart<2> c = sphere_polar_chart(0.3, std::numbers::pi, 1.0);
    EXPECT_THROW(exp_map(c, TangentPoint<2>{Vec<2>(1.5, 0.0), Vec<2>(0.0, 1.2)}), InjectivityError);
}

TEST(Jacobian, SphereValueMatchesFiniteDifferences) {
    const MetricChart<2> c = sphere_polar_chart();
    const double J = jacobian_J(c, TangentPoint<2>{Vec<2>(std::numbers::pi / 2, 0.0), Vec<2>(0.2, 0.3)}, 0.1, fine());
    EXPECT_NEAR(J - 1.0, -0.00086644136122973124, 1e-11);
}

TEST(Jacobian, OneDimensionalIsIdentity) {
    const MetricChart<1> c = conformal_1d_chart({0.0, 0.1, -0.05});
    EXPECT_NEAR(jacobian_J(c, TangentPoint<1>{Vec<1>(0.5), Vec<1>(0.7)}, 0.2, fine()), 1.0, 1e-10);
}

TEST(Jacobian, FlatIsExactlyOne) {
    const MetricChart<2> c = euclidean_chart<2>();
    EXPECT_NEAR(jacobian_J(c, TangentPoint<2>{Vec<2>(0.3, -1.0), Vec<2>(2.0, 0.7)}, 0.35), 1.0, 1e-13);
}

TEST(Jacobian, ZeroParameterGivesOne) {
    const MetricChart<2> c = sphere_polar_chart();
    EXPECT_EQ(jacobian_J(c, TangentPoint<2>{Vec<2>(1.0, 0.0), Vec<2>(0.3, 0.3)}, 0.0), 1.0);
}

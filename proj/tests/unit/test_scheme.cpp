#include <gtest/gtest.h>

#include "tgq/scheme.hpp"

using namespace tgq;

TEST(Scheme, BuiltinsAreConnesType) {
    for (const auto& s : {QuantizationScheme<2>::moyal(), QuantizationScheme<2>::standard(),
                          QuantizationScheme<2>::antistandard(), QuantizationScheme<2>::shifted(0.3)}) {
        EXPECT_TRUE(s.connes_type()) << s.name;
        EXPECT_NO_THROW(s.validate());
    }
    EXPECT_TRUE(QuantizationScheme<2>::moyal().is_moyal());
    EXPECT_FALSE(QuantizationScheme<2>::standard().is_moyal());
    EXPECT_TRUE(QuantizationScheme<1>::shifted(0.0).is_moyal());
}

TEST(Scheme, JPlacementExponents) {
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::symmetric_split).quantize_exponent(), -0.5);
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::symmetric_split).dequantize_exponent(), 0.5);
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::quantize_only).quantize_exponent(), -1.0);
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::quantize_only).dequantize_exponent(), 0.0);
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::dequantize_only).quantize_exponent(), 0.0);
    EXPECT_EQ(QuantizationScheme<1>::moyal(JPlacement::dequantize_only).dequantize_exponent(), 1.0);
    EXPECT_EQ(j_placement_from_string(to_string(JPlacement::quantize_only)), JPlacement::quantize_only);
    EXPECT_THROW(j_placement_from_string("both"), PreconditionError);
}

TEST(Scheme, DegenerateIdentificationIsRejected) {
    QuantizationScheme<2> s;
    s.id = Identification<2>::scalar(0.5, 0.5);
    EXPECT_THROW(s.validate(), PreconditionError);
    EXPECT_THROW(QuantizationScheme<2>::from_name("weyl-ish"), PreconditionError);
}

TEST(OrderingFunction, MoyalIsRealAndTracial) {
    const auto f = ordering_of_scheme(QuantizationScheme<2>::moyal(), 0.1);
    EXPECT_TRUE(f.is_semitracial());
    EXPECT_TRUE(f.is_real());
    EXPECT_TRUE(f.is_tracial());
}

TEST(OrderingFunction, StandardIsTracialButNotReal) {
    const auto f = ordering_of_scheme(QuantizationScheme<1>::standard(), 0.1);
    EXPECT_TRUE(f.is_semitracial());
    EXPECT_TRUE(f.is_tracial());
    EXPECT_FALSE(f.is_real());
}

TEST(OrderingFunction, ShiftedFamilyIsRealOnlyAtZero) {
    for (double t : {-0.5, -0.2, -0.05, 0.05, 0.3}) EXPECT_FALSE(ordering_of_scheme(QuantizationScheme<1>::shifted(t), 0.2).is_real()) << t;
    EXPECT_TRUE(ordering_of_scheme(QuantizationScheme<1>::shifted(0.0), 0.2).is_real());
}

TEST(OrderingFunction, ExplicitValue) {
    // f(theta, tau) = exp(i theta (1/2 - phi1) tau / hbar); standard has phi1 = 0
    const auto f = ordering_of_scheme(QuantizationScheme<1>::standard(), 0.5);
    const cplx v = f(Vec<1>(0.3), Vec<1>(0.7));
    EXPECT_NEAR(std::arg(v), 0.3 * 0.5 * 0.7 / 0.5, 1e-15);
    EXPECT_NEAR(std::abs(v), 1.0, 1e-15);
}

TEST(OrderingFunction, NeedsConnesTypeAndPositiveHbar) {
    QuantizationScheme<1> s;
    s.id = Identification<1>::scalar(0.5, -1.0);
    EXPECT_THROW(ordering_of_scheme(s, 0.1), UnsupportedError);
    EXPECT_THROW(ordering_of_scheme(QuantizationScheme<1>::moyal(), 0.0), PreconditionError);
}

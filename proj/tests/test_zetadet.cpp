#include <gtest/gtest.h>

#include <polydet/zetadet.hpp>

using namespace polydet;

namespace {

Polygon rect(double a, double b) { return build_polygon({{0, 0}, {a, 0}, {a, b}, {0, b}}); }

Polygon equilateral() { return build_polygon({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}}); }

Polygon hexagon() {
    std::vector<cplx> v;
    for (int k = 0; k < 6; ++k) v.push_back(std::polar(1.0, kPi * k / 3));
    return build_polygon(v);
}

// Side-1 equilateral triangle: 16 pi^2/9 (m^2 + mn + n^2), m, n >= 1, ordered pairs.
Spectrum equilateral_spectrum(double lambda_max) {
    Spectrum s;
    s.lambda_max = lambda_max;
    const double c = 16 * kPi * kPi / 9;
    for (int m = 1; c * (m * m + m + 1) < lambda_max; ++m)
        for (int n = 1; c * (m * m + m * n + n * n) < lambda_max; ++n) s.eigenvalues.push_back(c * (m * m + m * n + n * n));
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
    s.errors.assign(s.size(), 0.0);
    return s;
}

} // namespace

TEST(HeatCoefficients, KnownPolygons) {
    auto h = heat_coefficients(rect(1, 1));
    EXPECT_NEAR(h.a1, 1 / (4 * kPi), 1e-15);
    EXPECT_NEAR(h.a2, -0.5, 1e-15);
    EXPECT_NEAR(h.b1, 0.25, 1e-15);
    EXPECT_NEAR(heat_coefficients(rect(2.3, 0.4)).b1, 0.25, 1e-15);
    EXPECT_NEAR(heat_coefficients(equilateral()).b1, 1.0 / 3, 1e-15);
    EXPECT_NEAR(heat_coefficients(build_polygon({{0, 0}, {1, 0}, {0, 1}})).b1, 3.0 / 8, 1e-15);
    EXPECT_NEAR(heat_coefficients(hexagon()).b1, 5.0 / 24, 1e-15);
}

TEST(HeatCoefficients, ScalingVariation) {
    EXPECT_NEAR(scaling_variation(rect(1, 1)), -0.5, 1e-15);
    EXPECT_NEAR(scaling_variation(equilateral()), -2.0 / 3, 1e-15);
    EXPECT_NEAR(scaling_variation(hexagon()), -5.0 / 12, 1e-15);
}

TEST(RectangleOracle, FrozenValues) {
    EXPECT_NEAR(rectangle_logdet_exact(1, 1), -0.610245660528891, 1e-14);
    EXPECT_NEAR(rectangle_logdet_exact(2, 1), -0.870175853238870, 1e-14);
}

TEST(RectangleOracle, Symmetry) {
    for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 1.0}, {0.7, 1.9}, {3.0, 0.5}}) {
        EXPECT_NEAR(detail::rectangle_logdet_series(a, b), detail::rectangle_logdet_series(b, a), 1e-12);
        EXPECT_NEAR(rectangle_logdet_exact(a, b), rectangle_logdet_exact(b, a), 1e-12);
    }
}

TEST(RectangleOracle, Scaling) {
    for (double c : {2.0, 3.1, 0.45})
        for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 1.0}})
            EXPECT_NEAR(rectangle_logdet_exact(c * a, c * b) - rectangle_logdet_exact(a, b), -0.5 * std::log(c), 1e-12);
}

TEST(RectangleOracle, AgreesWithHeatTraceContinuation) {
    for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 1.0}, {1.3, 0.8}}) {
        auto s = rectangle_spectrum(a, b, 3000.0);
        auto d = zeta_logdet(s, heat_coefficients(rect(a, b)));
        EXPECT_NEAR(d.value, rectangle_logdet_exact(a, b), 1e-10);
    }
}

TEST(RectangleSpectrum, Enumeration) {
    auto s = rectangle_spectrum(1, 1, 50);
    ASSERT_GE(s.size(), 3u);
    EXPECT_NEAR(s.eigenvalues[0], 2 * kPi * kPi, 1e-12);
    EXPECT_NEAR(s.eigenvalues[1], 5 * kPi * kPi, 1e-12);
    EXPECT_NEAR(s.eigenvalues[2], 5 * kPi * kPi, 1e-12);
    EXPECT_NEAR(rectangle_spectrum(2, 1, 50).eigenvalues[0], 1.25 * kPi * kPi, 1e-12);
    // direct lattice count
    int count = 0;
    for (int m = 1; m < 100; ++m)
        for (int n = 1; n < 100; ++n)
            if (kPi * kPi * (m * m / 4.0 + n * n) < 500) ++count;
    EXPECT_EQ(rectangle_spectrum(2, 1, 500).size(), static_cast<std::size_t>(count));
    EXPECT_TRUE(rectangle_spectrum(2, 1, 500).count_check.ok);
}

TEST(ZetaLogdet, SquareFromExactSpectrum) {
    auto d = zeta_logdet(rectangle_spectrum(1, 1, 400), heat_coefficients(rect(1, 1)));
    EXPECT_NEAR(d.value, rectangle_logdet_exact(1, 1), 1e-8);
    EXPECT_LT(std::abs(d.value - rectangle_logdet_exact(1, 1)), d.error_estimate);
}

TEST(ZetaLogdet, EquilateralConverges) {
    const auto h = heat_coefficients(equilateral());
    const double ref = zeta_logdet(equilateral_spectrum(4000), h).value;
    auto d = zeta_logdet(equilateral_spectrum(800), h);
    EXPECT_NEAR(d.value, ref, 1e-8);
    EXPECT_TRUE(weyl_check(equilateral(), equilateral_spectrum(2000).eigenvalues, 2000, 2.0).ok);
}

TEST(ZetaLogdet, ScaledSquare) {
    // scaled spectrum of the side-2 square
    auto s = rectangle_spectrum(2, 2, 400);
    auto d = zeta_logdet(s, heat_coefficients(rect(2, 2)));
    EXPECT_NEAR(d.value - rectangle_logdet_exact(1, 1), -0.5 * std::log(2.0), 1e-8);
}

TEST(ZetaLogdet, EqualAreaRectangleDifference) {
    const double r = std::sqrt(2.0);
    auto sq = zeta_logdet(rectangle_spectrum(1, 1, 600), heat_coefficients(rect(1, 1)));
    auto re = zeta_logdet(rectangle_spectrum(r, 1 / r, 600), heat_coefficients(rect(r, 1 / r)));
    EXPECT_NEAR(sq.value - re.value, rectangle_logdet_exact(1, 1) - rectangle_logdet_exact(r, 1 / r), 1e-8);
}

TEST(ZetaLogdet, DiagnosticShrinksWithCutoff) {
    const auto h = heat_coefficients(rect(2, 1));
    double prev = INFINITY;
    for (double L : {200.0, 400.0, 800.0}) {
        auto d = zeta_logdet(rectangle_spectrum(2, 1, L), h, {.tail_tol = 1.0});
        EXPECT_LT(d.error_estimate, prev);
        EXPECT_LT(std::abs(d.value - rectangle_logdet_exact(2, 1)), d.error_estimate);
        prev = d.error_estimate;
    }
}

TEST(ZetaLogdet, TailNotConverged) {
    try {
        zeta_logdet(rectangle_spectrum(1, 1, 60), heat_coefficients(rect(1, 1)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "TailNotConverged");
        EXPECT_EQ(e.exit_code(), 3);
    }
}

#include <gtest/gtest.h>

#include <polydet/quadrature.hpp>

#include <cmath>

using namespace polydet;

TEST(Quadrature, LegendreIntegratesPolynomialsExactly) {
    const Rule& r = gauss_legendre(10);
    for (int k = 0; k <= 19; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * std::pow(r.x[i], k);
        const double exact = (k % 2 == 0) ? 2.0 / (k + 1) : 0.0;
        EXPECT_NEAR(s, exact, 1e-14) << "k=" << k;
    }
}

TEST(Quadrature, JacobiMassMatchesBetaFunction) {
    const double a = -0.3, b = 0.5;
    const Rule& r = gauss_jacobi(12, a, b);
    double s = 0.0;
    for (double w : r.w) s += w;
    const double exact = std::pow(2.0, a + b + 1) * std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(a + b + 2);
    EXPECT_NEAR(s, exact, 1e-13);
}

TEST(Quadrature, JacobiFirstMoment) {
    // int (1-x)^a (1+x)^b x dx = mass * (b-a)/(a+b+2)
    const double a = -0.6, b = -0.2;
    const Rule& r = gauss_jacobi(5, a, b);
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        m0 += r.w[i];
        m1 += r.w[i] * r.x[i];
    }
    EXPECT_NEAR(m1 / m0, (b - a) / (a + b + 2), 1e-14);
}

TEST(Quadrature, CompoundRuleEndpointSingularities) {
    const std::vector<std::complex<double>> sing{{0.3, 0.01}, {0.3, -0.01}};
    Rule r = compound_rule(0.0, 2.0, -0.5, -0.25, sing);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double t = r.x[i];
        s += r.w[i] * std::pow(r.da[i], -0.5) * std::pow(r.db[i], -0.25) / ((t - 0.3) * (t - 0.3) + 1e-4);
    }
    EXPECT_NEAR(s, 501.893034457518499428, 1e-9);
}

TEST(Quadrature, CompoundRuleSingleEnd) {
    Rule r = compound_rule(0.0, 1.0, -0.7, 0.0, {});
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * std::pow(r.da[i], -0.7) * std::cos(5 * r.x[i]);
    EXPECT_NEAR(s, 1.45301327533765313730, 1e-13);
}

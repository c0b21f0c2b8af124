#include <gtest/gtest.h>

#include <polydet/varform.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "support.hpp"

using namespace polydet;
using testing_support::random_convex_suite;
using testing_support::rectangle;
using testing_support::regular;
using testing_support::unit_square;

namespace {

// d/da log det of the a x 1 rectangle, central differences with one Richardson step
double rectangle_derivative(double a) {
    auto D = [&](double h) { return (rectangle_logdet_exact(a + h, 1.0) - rectangle_logdet_exact(a - h, 1.0)) / (2.0 * h); };
    const double h = 1e-3;
    return (4.0 * D(0.5 * h) - D(h)) / 3.0;
}

Polygon right_isosceles() { return build_polygon({{0, 0}, {1, 0}, {0, 1}}); }

DeformationField field(const Polygon& p, const std::vector<cplx>& v) { return field_from_vertex_velocities(p, v); }

const std::vector<Polygon>& regression_suite() {
    static const std::vector<Polygon> s = random_convex_suite(2024, 20);
    return s;
}

} // namespace

TEST(CornerConstant, ClosedForm) {
    EXPECT_NEAR(corner_constant(2.0 * kPi), 0.0, 1e-16);
    EXPECT_NEAR(corner_constant(kPi), -1.0 / (4.0 * kPi), 1e-15);
    EXPECT_NEAR(corner_constant(2.0 * kPi / 3.0), -2.0 / (3.0 * kPi), 1e-15);
    EXPECT_THROW(corner_constant(0.0), Error);
    EXPECT_THROW(corner_constant(4.0 * kPi), Error);
}

TEST(CornerConstant, ContourIntegralMatchesClosedForm) {
    for (double b : {kPi / 2, kPi, 3.0, 2.0 * kPi, 3.0 * kPi, 3.5 * kPi, 0.3})
        EXPECT_NEAR(corner_constant_by_contour(b), corner_constant(b), 1e-10) << "beta " << b;
    // values fixed independently of both implementations
    EXPECT_NEAR(corner_constant_by_contour(3.0), -0.0898294596176394, 1e-12);
    EXPECT_NEAR(corner_constant_by_contour(3.5 * kPi), 0.0178643303470495, 1e-12);
}

TEST(CornerConstant, ContourPlacement) {
    // any abscissa strictly between the pole-free limits gives the same value
    CornerContourConfig cfg;
    cfg.abscissa = 0.3 * kPi;
    EXPECT_NEAR(corner_constant_by_contour(kPi, cfg), -1.0 / (4.0 * kPi), 1e-10);
    cfg.abscissa = kPi;
    EXPECT_THROW(corner_constant_by_contour(kPi, cfg), Error);
}

TEST(CornerTerm, Values) {
    const Polygon sq = unit_square();
    EXPECT_EQ(corner_term(sq, {0, 0, 0, 0}), 0.0);
    const double e = 1e-3;
    EXPECT_NEAR(corner_term(sq, {e, -e, 0, 0}), 0.0, 1e-18);
    const Polygon tri = right_isosceles(); // angles pi/2, pi/4, pi/4
    EXPECT_NEAR(corner_term(tri, {-e, e, 0}), (kEulerGamma - std::log(2.0)) * e / kPi, 1e-16);
    EXPECT_THROW(corner_term(tri, {e, e, 0}), Error);
}

TEST(MainFormula, TotalIsSumOfTerms) {
    const Polygon& p = regression_suite()[4];
    const SCMap m = solve_parameter_problem(p);
    std::vector<cplx> v(p.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = {0.1 * k, -0.05 * k * k};
    const auto r = main_formula(m, field(p, v));
    EXPECT_EQ(r.total, r.boundary_term + r.corner_term);
    EXPECT_NE(r.corner_term, 0.0);
    const auto s = main_formula(m, field(p, side_shift_velocities(p, 1)));
    EXPECT_NEAR(s.corner_term, 0.0, 1e-15);
}

TEST(MainFormula, DilationScalingLaw) {
    for (const Polygon& p : {unit_square(), right_isosceles(), regular(6)}) {
        const SCMap m = solve_parameter_problem(p);
        const auto r = main_formula(m, field(p, dilation_velocities(p, {0.2, 0.1})));
        EXPECT_NEAR(r.total, scaling_variation(p), 1e-9);
    }
    EXPECT_NEAR(scaling_variation(unit_square()), -0.5, 1e-15);
}

TEST(MainFormula, RectangleSideShift) {
    const Polygon p = rectangle(1.0, 1.0);
    const SCMap m = solve_parameter_problem(p);
    const auto r = main_formula(m, field(p, side_shift_velocities(p, 1)));
    EXPECT_NEAR(r.total, rectangle_derivative(1.0), 1e-8);
    EXPECT_NEAR(r.corner_term, 0.0, 1e-15);
    const Polygon q = rectangle(1.5, 1.0);
    const auto r2 = main_formula(solve_parameter_problem(q), field(q, side_shift_velocities(q, 1)));
    EXPECT_NEAR(r2.total, rectangle_derivative(1.5), 1e-8);
}

TEST(MainFormula, SquareCornerMovesTurnSides) {
    // Moving corner (1,1) right is the mirror image, in y = 1/2, of moving (1,0) right; the
    // two add up to the side shift. Each is half of d/da, and so is a vertical move by symmetry.
    // The angles change but stay equal in pairs, so any corner term cancels.
    const Polygon p = unit_square();
    const SCMap m = solve_parameter_problem(p);
    const double half = 0.5 * rectangle_derivative(1.0);
    const auto x = main_formula(m, field(p, {0.0, 0.0, 1.0, 0.0}));
    const auto y = main_formula(m, field(p, {0.0, 0.0, cplx(0.0, 1.0), 0.0}));
    EXPECT_NEAR(x.total, half, 1e-8);
    EXPECT_NEAR(y.total, half, 1e-8);
    EXPECT_NEAR(x.corner_term, 0.0, 1e-15);
}

TEST(MainFormula, RegressionSuiteInvariants) {
    for (const Polygon& p : regression_suite()) {
        const SCMap m = solve_parameter_problem(p);
        EXPECT_NEAR(main_formula(m, field(p, translation_velocities(p, {0.7, -0.4}))).total, 0.0, 1e-8);
        EXPECT_NEAR(main_formula(m, field(p, rotation_velocities(p, {0.1, 0.3}))).total, 0.0, 1e-8);
        EXPECT_NEAR(main_formula(m, field(p, dilation_velocities(p))).total, scaling_variation(p), 1e-5);
        // linearity in the field
        std::vector<cplx> v1(p.size()), v2(p.size()), v12(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            v1[k] = {std::cos(1.0 + k), 0.3 * k};
            v2[k] = {-0.2 * k, std::sin(2.0 * k)};
            v12[k] = v1[k] + v2[k];
        }
        const double a = main_formula(m, field(p, v1)).total;
        const double b = main_formula(m, field(p, v2)).total;
        EXPECT_NEAR(main_formula(m, field(p, v12)).total, a + b, 1e-9);
    }
}

TEST(MainFormula, GaugeInvariance) {
    const Polygon& p = regression_suite()[7];
    SCConfig cfg;
    cfg.init_jitter = 0.4;
    cfg.seed = 99;
    const SCMap a = solve_parameter_problem(p), b = solve_parameter_problem(p, cfg);
    std::vector<cplx> v(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) v[k] = {0.3 * std::cos(3.0 * k), 0.2 * k};
    EXPECT_NEAR(main_formula(a, field(p, v)).total, main_formula(b, field(p, v)).total, 1e-8);
}

TEST(Hadamard, EpsilonResidualSlope) {
    // the first omitted term of {z,s}(A.nu) is s^{2p-2}, p = pi/alpha, so the truncation
    // residual decays like eps^{2p-1}: slope 3 on the square
    const Polygon p = unit_square();
    const SCMap m = solve_parameter_problem(p);
    const auto r = hadamard_boundary_integral(m, field(p, side_shift_velocities(p, 0)));
    EXPECT_NEAR(r.slope, 3.0, 0.1);
    const Polygon h = regular(6); // p = 3/2
    const auto rh = hadamard_boundary_integral(solve_parameter_problem(h), field(h, side_shift_velocities(h, 0)));
    EXPECT_NEAR(rh.slope, 2.0, 0.1);
}

TEST(Hadamard, CountertermCoefficients) {
    const Polygon p = right_isosceles();
    const SCMap m = solve_parameter_problem(p);
    const auto f = field(p, dilation_velocities(p, {0.2, 0.2}));
    const auto r = hadamard_boundary_integral(m, f);
    for (const auto& d : r.sides) {
        const std::size_t j = d.side, k = (j + 1) % 3;
        const double pa = kPi / p.angles[j], pb = kPi / p.angles[k];
        EXPECT_DOUBLE_EQ(d.a0, 0.5 * (1 - pa * pa) * f.c0[j]);
        EXPECT_DOUBLE_EQ(d.a1, 0.5 * (1 - pb * pb) * (f.c0[j] + f.c1[j] * p.side_lengths[j]));
    }
}

TEST(Hadamard, ProfileAwayFromVertices) {
    const Polygon p = build_polygon({{0, 0}, {1, 0}, {1.4, 0.6}, {0.9, 1.3}, {0.1, 1.0}});
    const SCMap m = solve_parameter_problem(p);
    const std::size_t j = 2;
    const double L = p.side_lengths[j], lo = 0.2 * L, hi = 0.7 * L;
    auto g = [&](double s) { return s <= lo || s >= hi ? 0.0 : std::pow((s - lo) * (hi - s), 4); };
    const double v = profile_boundary_term(m, j, g, lo, hi);
    // oracle: adaptive quadrature in arclength with {z,x} from the inverse map
    auto integrand = [&](double s) {
        const cplx t = p.tangent(j);
        const cplx szx = m.schwarzian_zx(p.vertex(j) + s * t);
        return (szx * t * t).real() * g(s);
    };
    const double ref = -boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 12, 1e-13) / (6.0 * kPi);
    EXPECT_NEAR(v, ref, 1e-9 * std::max(1.0, std::abs(ref)));
    EXPECT_NE(ref, 0.0);
}

TEST(ContourShift, ContourIndependence) {
    const Polygon& p = regression_suite()[3];
    const SCMap m = solve_parameter_problem(p);
    const auto f = field(p, side_shift_velocities(p, 1));
    VarConfig a, b;
    a.contour_eps = 0.1;
    b.contour_eps = 0.03;
    const auto ra = contour_shift_integral(m, f, a);
    EXPECT_NEAR(ra.total, contour_shift_integral(m, f, b).total, 1e-8);
    EXPECT_LT(ra.contour_change, 1e-8);
    EXPECT_EQ(ra.route, "contour_shift");
}

TEST(ContourShift, AgreesWithHadamardAndRectangle) {
    const Polygon sq = unit_square();
    const SCMap m = solve_parameter_problem(sq);
    const auto f = field(sq, side_shift_velocities(sq, 2));
    EXPECT_NEAR(contour_shift_integral(m, f).total, main_formula(m, f).total, 1e-6);
    EXPECT_NEAR(contour_shift_integral(m, f).total, rectangle_derivative(1.0), 1e-5);
    for (const Polygon& p : regression_suite()) {
        const SCMap mp = solve_parameter_problem(p);
        for (std::size_t j = 0; j < p.size(); j += 2) {
            const auto g = field(p, side_shift_velocities(p, j));
            EXPECT_NEAR(contour_shift_integral(mp, g).total, main_formula(mp, g).total, 1e-6);
        }
    }
}

TEST(ContourShift, RejectsNonShiftFields) {
    const Polygon p = right_isosceles();
    const SCMap m = solve_parameter_problem(p);
    EXPECT_THROW(contour_shift_integral(m, field(p, rotation_velocities(p, {0.3, 0.3}))), Error);
    VarConfig cfg;
    cfg.contour_eps = 0.7;
    EXPECT_THROW(contour_shift_integral(m, field(p, side_shift_velocities(p, 0)), cfg), Error);
}

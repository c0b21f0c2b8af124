#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "eigensolve.hpp"
#include "samples.hpp"
#include "smoothwz.hpp"
#include "varform.hpp"
#include "zetadet.hpp"

namespace polydet::validation {

struct Check {
    std::string id;
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    double seconds = 0.0;
    std::string note;
};

// MPS spectrum below lambda_max followed by the zeta pipeline.
inline LogDet polygon_logdet(const Polygon& p, double lambda_max, const MPSConfig& mps = {}, const ZetaConfig& zeta = {}) {
    return zeta_logdet(dirichlet_eigenvalues(p, lambda_max, mps), heat_coefficients(p), zeta);
}

// Default cutoff for the zeta pipeline: scale / w^2 with w the narrowest width.
inline double default_lambda_max(const Polygon& p, double scale = 600.0) {
    const double w = polygon_width_scale(p);
    return scale / (w * w);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline Check run(const std::string& id, const std::string& name, double tol,
                 const std::function<double(std::string&)>& measure) {
    Check c;
    c.id = id;
    c.name = name;
    c.tolerance = tol;
    const auto t0 = Clock::now();
    try {
        c.measured = measure(c.note);
        c.pass = std::isfinite(c.measured) && c.measured < tol;
    } catch (const std::exception& e) {
        c.measured = INFINITY;
        c.pass = false;
        c.note = e.what();
    }
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

inline DeformationField field(const Polygon& p, const std::vector<cplx>& v) { return field_from_vertex_velocities(p, v); }

// d/da log det of the a x b rectangle: central differences with one Richardson step.
inline double rectangle_derivative(double a, double b) {
    auto D = [&](double h) { return (rectangle_logdet_exact(a + h, b) - rectangle_logdet_exact(a - h, b)) / (2.0 * h); };
    const double h = 1e-3;
    return (4.0 * D(0.5 * h) - D(h)) / 3.0;
}

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

} // namespace detail

// Disk law for the smooth-domain formula.
inline Check disk_law() {
    return detail::run("1", "disk law -1/3", 1e-8, [](std::string&) {
        return std::abs(wz_variation(SmoothDomain{{0.0, 1.0}}, {0.0, 1.0}) + 1.0 / 3.0);
    });
}

inline Check wz_finite_difference() {
    return detail::run("2", "WZ vs finite difference of Alvarez", 1e-6, [](std::string& note) {
        const std::vector<std::vector<cplx>> domains{{0.0, 1.0, 0.1},
                                                     {0.0, 1.0, 0.0, 0.15},
                                                     {0.0, 1.0, cplx(0.0, 0.05), 0.0, -0.04},
                                                     {0.2, 1.0, -0.1, 0.05},
                                                     {0.0, 1.0, 0.0, 0.0, 0.08}};
        const std::vector<std::vector<cplx>> fields{{0.0, 0.0, 1.0}, {0.0, 0.0, 0.0, 1.0}, {0.1, cplx(0.0, 0.2), 0.0, 0.3}};
        double worst = 0.0;
        for (const auto& a : domains)
            for (const auto& V : fields) {
                const auto r = wz_vs_alvarez_fd(SmoothDomain{a}, V, 1e-4);
                worst = std::max(worst, std::abs(r.formula - r.fd));
            }
        note = "15 domain/field pairs";
        return worst;
    });
}

inline Check corner_contour() {
    return detail::run("3", "corner constant by contour", 1e-8, [](std::string&) {
        double worst = 0.0;
        for (double b : {kPi / 2, kPi, 3.0, 2 * kPi, 3 * kPi})
            worst = std::max(worst, std::abs(corner_constant_by_contour(b) - corner_constant(b)));
        return worst;
    });
}

inline Check rectangle_oracle() {
    return detail::run("4", "MPS + zeta vs exact rectangle determinant", 1e-5, [](std::string& note) {
        double worst = 0.0;
        for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{2.0, 1.0}}) {
            const LogDet d = polygon_logdet(samples::rectangle(a, b), 400.0);
            const double err = std::abs(d.value - rectangle_logdet_exact(a, b));
            note += (note.empty() ? "" : ", ") + std::string(a == 1.0 ? "1x1 " : "2x1 ") + detail::fmt(err);
            worst = std::max(worst, err);
        }
        return worst;
    });
}

inline Check rectangle_side_shift() {
    return detail::run("5", "main formula vs d/da of exact rectangle determinant", 1e-5, [](std::string& note) {
        const Polygon p = samples::unit_square();
        const auto r = main_formula(solve_parameter_problem(p), detail::field(p, side_shift_velocities(p, 1)));
        note = "corner term " + detail::fmt(r.corner_term);
        return std::abs(r.total - detail::rectangle_derivative(1.0, 1.0));
    });
}

inline Check scaling_law() {
    return detail::run("6", "dilation gives -2 beta1", 1e-5, [](std::string&) {
        double worst = 0.0;
        for (const Polygon& p : {samples::unit_square(), samples::right_isosceles(), samples::regular(6)}) {
            const auto r = main_formula(solve_parameter_problem(p), detail::field(p, dilation_velocities(p, {0.2, 0.1})));
            worst = std::max(worst, std::abs(r.total + 2.0 * corner_beta1(p)));
        }
        return worst;
    });
}

// Triangle with its apex sliding parallel to the base, so that all angles change.
inline Check corner_term_activation() {
    return detail::run("7", "sliding-vertex triangle: formula vs determinant difference", 1e-2, [](std::string& note) {
        const Polygon p = build_polygon({{0, 0}, {1, 0}, {0.35, 0.8}});
        const std::vector<cplx> v{0.0, 0.0, 1.0};
        const auto r = main_formula(solve_parameter_problem(p), detail::field(p, v));
        const double cut = default_lambda_max(p);
        auto L = [&](double t) { return polygon_logdet(moved_polygon(p, v, t), cut).value; };
        const double h = 5e-3;
        const double d1 = (L(h) - L(-h)) / (2 * h), d2 = (L(0.5 * h) - L(-0.5 * h)) / h;
        const double fd = (4.0 * d2 - d1) / 3.0;
        note = "formula " + detail::fmt(r.total) + " (corner " + detail::fmt(r.corner_term) + "), difference " + detail::fmt(fd);
        return std::abs(r.total - fd) / std::abs(fd);
    });
}

inline Check route_agreement() {
    return detail::run("8", "Hadamard vs contour route on side shifts", 1e-6, [](std::string& note) {
        const auto polys = samples::random_convex_suite(77, 10);
        double worst = 0.0;
        int fields = 0;
        for (const Polygon& p : polys) {
            const SCMap m = solve_parameter_problem(p);
            for (std::size_t j = 0; j < p.size(); ++j) {
                const auto f = detail::field(p, side_shift_velocities(p, j));
                worst = std::max(worst, std::abs(contour_shift_integral(m, f).total - main_formula(m, f).total));
                ++fields;
            }
        }
        note = std::to_string(fields) + " side shifts on 10 polygons";
        return worst;
    });
}

inline Check eigenvalue_variation() {
    return detail::run("9", "first eigenvalue of the stretched square", 1e-4, [](std::string& note) {
        const Polygon sq = samples::unit_square();
        const auto v = side_shift_velocities(sq, 1);
        const double d = hadamard_eigenvalue_variation(sq, field_from_vertex_velocities(sq, v), 1);
        const double t = 1e-4, lam = 2 * kPi * kPi;
        const double fd = (refine_eigenvalue(moved_polygon(sq, v, t), lam) - refine_eigenvalue(moved_polygon(sq, v, -t), lam)) / (2 * t);
        const double exact = -2 * kPi * kPi;
        note = "formula " + detail::fmt(d) + ", difference " + detail::fmt(fd);
        return std::max(std::abs(d / exact - 1.0), std::abs(fd / exact - 1.0));
    });
}

// Translations and rotations give zero; the formula is linear in the field.
inline Check rigid_motions_and_linearity() {
    return detail::run("10", "rigid-motion nullity and linearity on the regression suite", 1e-8, [](std::string& note) {
        double nullity = 0.0, linearity = 0.0;
        for (const Polygon& p : samples::regression_suite()) {
            const SCMap m = solve_parameter_problem(p);
            nullity = std::max(nullity, std::abs(main_formula(m, detail::field(p, translation_velocities(p, {0.7, -0.4}))).total));
            nullity = std::max(nullity, std::abs(main_formula(m, detail::field(p, rotation_velocities(p, {0.1, 0.3}))).total));
            std::vector<cplx> v1(p.size()), v2(p.size()), v12(p.size());
            for (std::size_t k = 0; k < p.size(); ++k) {
                v1[k] = {std::cos(1.0 + k), 0.3 * k};
                v2[k] = {-0.2 * k, std::sin(2.0 * k)};
                v12[k] = v1[k] + v2[k];
            }
            const double a = main_formula(m, detail::field(p, v1)).total, b = main_formula(m, detail::field(p, v2)).total;
            linearity = std::max(linearity, std::abs(main_formula(m, detail::field(p, v12)).total - a - b));
        }
        note = "nullity " + detail::fmt(nullity) + ", linearity " + detail::fmt(linearity);
        return std::max(nullity, linearity);
    });
}

// Numbered acceptance criteria, in order.
inline std::vector<std::function<Check()>> acceptance_criteria() {
    return {disk_law,     wz_finite_difference,   corner_contour,  rectangle_oracle,     rectangle_side_shift,
            scaling_law,  corner_term_activation, route_agreement, eigenvalue_variation, rigid_motions_and_linearity};
}

inline Check geometry_checks() {
    return detail::run("G", "square invariants and non-convex rejection", 1e-12, [](std::string& note) {
        const Polygon sq = samples::unit_square();
        double err = std::abs(sq.area - 1.0) + std::abs(sq.perimeter - 4.0);
        for (double a : sq.angles) err += std::abs(a - kPi / 2);
        try {
            build_polygon({{0, 0}, {2, 0}, {1, 0.2}, {1, 2}});
            note = "non-convex input accepted";
            return static_cast<double>(INFINITY);
        } catch (const Error& e) {
            if (e.kind() != "NonConvex") {
                note = "unexpected error " + e.kind();
                return static_cast<double>(INFINITY);
            }
        }
        return err;
    });
}

inline Check scmap_checks() {
    return detail::run("S", "parameter problem residual on square, triangle and regression suite", 1e-10, [](std::string& note) {
        double worst = solve_parameter_problem(samples::unit_square()).residual;
        worst = std::max(worst, solve_parameter_problem(samples::right_isosceles()).residual);
        for (const Polygon& p : samples::regression_suite()) worst = std::max(worst, solve_parameter_problem(p).residual);
        note = "22 polygons";
        return worst;
    });
}

inline Check square_spectrum() {
    return detail::run("E", "MPS spectrum of the square vs lattice", 1e-8, [](std::string& note) {
        const Spectrum s = dirichlet_eigenvalues(samples::unit_square(), 200.0);
        const Spectrum e = rectangle_spectrum(1, 1, 200.0);
        if (s.size() != e.size()) {
            note = "count " + std::to_string(s.size()) + " vs " + std::to_string(e.size());
            return static_cast<double>(INFINITY);
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(s.eigenvalues[i] / e.eigenvalues[i] - 1.0));
        note = std::to_string(s.size()) + " eigenvalues";
        return worst;
    });
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"geometry", "scmap", "eigs", "det", "var", "wz", "all"};
    return names;
}

inline std::vector<Check> run_suite(const std::string& name) {
    using F = std::function<Check()>;
    std::vector<F> fs;
    if (name == "geometry") fs = {geometry_checks};
    else if (name == "scmap") fs = {scmap_checks};
    else if (name == "eigs") fs = {square_spectrum, eigenvalue_variation};
    else if (name == "det") fs = {rectangle_oracle, corner_term_activation};
    else if (name == "var") fs = {corner_contour, rectangle_side_shift, scaling_law, route_agreement, rigid_motions_and_linearity};
    else if (name == "wz") fs = {disk_law, wz_finite_difference};
    else if (name == "all") {
        fs = {geometry_checks, scmap_checks, square_spectrum};
        for (auto& c : acceptance_criteria()) fs.push_back(c);
    } else input_error("UnknownSuite", "suite must be one of geometry, scmap, eigs, det, var, wz, all");
    std::vector<Check> out;
    for (auto& f : fs) out.push_back(f());
    return out;
}

} // namespace polydet::validation

#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "quadrature.hpp"
#include "scmap.hpp"
#include "zetadet.hpp"

namespace polydet {

// G(beta) = (1/(6 beta)) (beta/(2 pi) - 2 pi/beta)
inline double corner_constant(double beta) {
    if (!(beta > 0.0 && beta < 4.0 * kPi)) input_error("BadCornerAngle", "beta must lie in (0, 4 pi)");
    return (beta / (2.0 * kPi) - 2.0 * kPi / beta) / (6.0 * beta);
}

struct CornerContourConfig {
    // Re theta of the left vertical line; <= 0 selects -min(beta/2, pi).
    double abscissa = 0.0;
    double tol = 1e-13;
};

// (2 pi / (8 i pi beta^2)) times the integral of cot(t/2) / sin^2(pi t / beta) over the
// vertical lines Re t = -c (upwards) and Re t = +c (downwards).  The integrand is odd
// and real on the real axis, so both lines contribute 2 Re of a half-line integral.
inline double corner_constant_by_contour(double beta, const CornerContourConfig& cfg = {}) {
    if (!(beta > 0.0 && beta < 4.0 * kPi)) input_error("BadCornerAngle", "beta must lie in (0, 4 pi)");
    const double c = cfg.abscissa > 0.0 ? cfg.abscissa : std::min(0.5 * beta, kPi);
    const double k_sin = c / beta, k_cot = c / (2.0 * kPi);
    if (std::abs(k_sin - std::round(k_sin)) < 1e-9 || std::abs(k_cot - std::round(k_cot)) < 1e-9)
        input_error("PoleOnContour", "contour abscissa " + std::to_string(c) + " meets a pole");
    // written with e^{i t}, e^{i pi t / beta}, which decay for Im t > 0
    auto f = [&](double y) {
        const cplx I(0.0, 1.0);
        const cplx t(-c, y);
        const cplx e = std::exp(I * t);
        const cplx q = std::exp(I * kPi * t / beta);
        const cplx cot = I * (e + 1.0) / (e - 1.0);
        const cplx inv_sin = 2.0 * I * q / (q * q - 1.0);
        return (cot * inv_sin * inv_sin).real();
    };
    boost::math::quadrature::exp_sinh<double> es;
    const double half = es.integrate(f, cfg.tol);
    return half / (beta * beta);
}

// (gamma - log 2)/12 sum (pi/alpha - alpha/pi) dalpha/alpha
inline double corner_term(const Polygon& p, const std::vector<double>& delta_angles, double tol = 1e-9) {
    if (delta_angles.size() != p.size()) input_error("FieldSize", "one angle variation per vertex expected");
    double sum = 0.0, scale = 0.0;
    for (double d : delta_angles) {
        sum += d;
        scale = std::max(scale, std::abs(d));
    }
    if (std::abs(sum) > tol * std::max(1.0, scale))
        input_error("AngleSumViolation", "angle variations sum to " + std::to_string(sum));
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = p.angles[i];
        s += (kPi / a - a / kPi) * delta_angles[i] / a;
    }
    return (kEulerGamma - std::log(2.0)) / 12.0 * s;
}

struct VarConfig {
    int grade_levels = 3;          // geometric refinement toward each vertex
    double diag_eps = 0.05;        // check radius: theta-offset as a fraction of the adjacent prevertex gaps
    double mismatch_ratio = 0.75;  // |r(eps/2)| must drop below this fraction of |r(eps)|
    double mismatch_floor = 1e-9;
    bool check_counterterms = true;
    double contour_eps = 0.1;      // arc radius in the z-plane, times the smallest adjacent prevertex gap
    int contour_points = 64;
};

struct CountertermData {
    std::size_t side = 0;
    // {z,s}(A.nu) ~ a0/s^2 + b0/s at the start vertex, a1/sigma^2 + b1/sigma at the end
    double a0 = 0.0, b0 = 0.0, a1 = 0.0, b1 = 0.0;
    double finite_part = 0.0;
};

struct HadamardResult {
    double value = 0.0;                 // sum over sides of FP int {z,s}(A.nu) ds
    std::vector<CountertermData> sides;
    double eps = 0.0;                   // smallest per-vertex truncation radius used by the check
    double residual_eps = 0.0;          // truncated-minus-growing value minus the finite part
    double residual_half = 0.0;         // same at eps/2
    double slope = 0.0;                 // log2 of the summed |residual| ratio between eps and eps/2
};

struct DeterminantVariation {
    double boundary_term = 0.0;
    double corner_term = 0.0;
    double total = 0.0;
    std::string route = "hadamard";
    HadamardResult hadamard;
    double contour_change = 0.0;        // contour route: change when the arcs are halved
};

namespace detail {

inline bool side_is_active(const DeformationField& f, std::size_t j) { return f.c0[j] != 0.0 || f.c1[j] != 0.0; }

// {z,s}(A.nu) on side j minus its singular terms at either end, as integrands in theta.
struct SideRemainder {
    const SCMap& m;
    std::size_t j;
    double c0, c1, L;
    CountertermData d;

    SideRemainder(const SCMap& map, const DeformationField& f, std::size_t side) : m(map), j(side) {
        const std::size_t n = m.size();
        c0 = f.c0[j];
        c1 = f.c1[j];
        L = m.polygon.side_lengths[j];
        const double pa = kPi / m.polygon.angles[j], pb = kPi / m.polygon.angles[(j + 1) % n];
        d.side = j;
        d.a0 = 0.5 * (1.0 - pa * pa) * c0;
        d.b0 = 0.5 * (1.0 - pa * pa) * c1;
        d.a1 = 0.5 * (1.0 - pb * pb) * (c0 + c1 * L);
        d.b1 = -0.5 * (1.0 - pb * pb) * c1;
    }

    // {z,s} = (1/2 - {x,theta}) / |dx/dtheta|^2; returned times ds/dtheta
    double full(double th, double d0, double d1, double s) const {
        const double sp = m.speed(th, j, d0, d1);
        return (0.5 - m.schwarzian_x_theta(th, j, d0, d1)) / sp * (c0 + c1 * s);
    }
    double start(double th, double d0, double d1) const {
        const double s = m.arclength_from_start(j, d0);
        return full(th, d0, d1, s) - (d.a0 / (s * s) + d.b0 / s) * m.speed(th, j, d0, d1);
    }
    double end(double th, double d0, double d1) const {
        const double sig = m.arclength_to_end(j, d1);
        return full(th, d0, d1, L - sig) - (d.a1 / (sig * sig) + d.b1 / sig) * m.speed(th, j, d0, d1);
    }
};

// FP int_0^L {z,s}(c0 + c1 s) ds over side j, split at the theta-midpoint.
inline CountertermData side_finite_part(const SCMap& m, const DeformationField& f, std::size_t j, const VarConfig& cfg) {
    const std::size_t n = m.size();
    const SideRemainder R(m, f, j);
    CountertermData d = R.d;
    const double span = m.side_span(j);
    const double mid = 0.5 * span;
    const double s_mid = m.arclength_from_start(j, mid);
    const double sig_mid = m.arclength_to_end(j, span - mid);
    const double first = m.side_integral(
        j, 0.0, span - mid, [&](double th, double d0, double d1) { return R.start(th, d0, d1); }, -m.beta[j], NAN,
        cfg.grade_levels);
    const double second = m.side_integral(
        j, mid, 0.0, [&](double th, double d0, double d1) { return R.end(th, d0, d1); }, NAN, -m.beta[(j + 1) % n],
        cfg.grade_levels);
    d.finite_part = first + second - d.a0 / s_mid + d.b0 * std::log(s_mid) - d.a1 / sig_mid + d.b1 * std::log(sig_mid);
    return d;
}

// Contribution of one end of side j to (int_{e}^{...} {z,s}(A.nu) ds minus its growing
// terms) minus the finite part: minus the integral of the subtracted integrand over the
// first arclength e from that end, evaluated from the vertex so tiny radii stay accurate.
inline double end_truncation_residual(const SCMap& m, const DeformationField& f, std::size_t j, bool at_end, double e) {
    const SideRemainder R(m, f, j);
    const double t = m.offset_at_arclength(j, e, at_end);
    return -m.end_integral(j, at_end, t, [&](double th, double d0, double d1) {
        return at_end ? R.end(th, d0, d1) : R.start(th, d0, d1);
    });
}

// Truncation radius at vertex v: the image of a theta-offset that is small against the
// neighbouring prevertex gaps, where the local expansion is accurate.
inline double vertex_check_radius(const SCMap& m, std::size_t v, double factor) {
    const std::size_t n = m.size();
    const std::size_t prev = (v + n - 1) % n;
    const double off = factor * (m.polygon.angles[v] / kPi) * std::min(m.side_span(v), m.side_span(prev));
    return std::min({m.arclength_from_start(v, off), m.arclength_to_end(prev, off),
                     0.25 * std::min(m.polygon.side_lengths[v], m.polygon.side_lengths[prev])});
}

} // namespace detail

inline HadamardResult hadamard_boundary_integral(const SCMap& m, const DeformationField& f, const VarConfig& cfg = {}) {
    const std::size_t n = m.size();
    if (f.c0.size() != n || f.c1.size() != n) input_error("FieldSize", "field does not match the polygon");
    HadamardResult r;
    for (std::size_t j = 0; j < n; ++j) {
        if (!detail::side_is_active(f, j)) continue;
        r.sides.push_back(detail::side_finite_part(m, f, j, cfg));
        r.value += r.sides.back().finite_part;
    }
    if (cfg.check_counterterms && !r.sides.empty()) {
        std::vector<double> eps(n);
        for (std::size_t v = 0; v < n; ++v) eps[v] = detail::vertex_check_radius(m, v, cfg.diag_eps);
        r.eps = *std::min_element(eps.begin(), eps.end());
        // Each side end is checked on its own at e, e/2, e/4: a missed singular term keeps
        // the residual from decaying at both halvings.
        double abs_eps = 0.0, abs_half = 0.0;
        for (const auto& d : r.sides)
            for (bool at_end : {false, true}) {
                const double e = eps[at_end ? (d.side + 1) % n : d.side];
                const double r1 = detail::end_truncation_residual(m, f, d.side, at_end, e);
                const double r2 = detail::end_truncation_residual(m, f, d.side, at_end, 0.5 * e);
                const double r4 = detail::end_truncation_residual(m, f, d.side, at_end, 0.25 * e);
                r.residual_eps += r1;
                r.residual_half += r2;
                abs_eps += std::abs(r1);
                abs_half += std::abs(r2);
                const bool stalled = std::abs(r2) > cfg.mismatch_ratio * std::abs(r1) + cfg.mismatch_floor &&
                                     std::abs(r4) > cfg.mismatch_ratio * std::abs(r2) + cfg.mismatch_floor;
                if (stalled)
                    numerical_error("CountertermMismatch", "side " + std::to_string(d.side) + (at_end ? " end" : " start") +
                                                               ": truncation residual " + std::to_string(r1) + ", " +
                                                               std::to_string(r2) + ", " + std::to_string(r4) +
                                                               " at eps, eps/2, eps/4");
            }
        r.slope = std::log2(abs_eps / abs_half);
    }
    return r;
}

// delta log det = (1/6 pi) Im H-int {z,x}(A.nu) nu dx + corner term.  On a side
// x = x_j + t s with outward normal -i t, the integrand reduces to -{z,s}(A.nu) ds.
inline DeterminantVariation main_formula(const SCMap& m, const DeformationField& f, const VarConfig& cfg = {}) {
    DeterminantVariation v;
    v.hadamard = hadamard_boundary_integral(m, f, cfg);
    v.boundary_term = -v.hadamard.value / (6.0 * kPi);
    v.corner_term = corner_term(m.polygon, f.delta_angles);
    v.total = v.boundary_term + v.corner_term;
    return v;
}

// Boundary term for a normal velocity g(s) on side j supported in [s_lo, s_hi], away
// from the vertices; no regularization is involved.
template <class G>
double profile_boundary_term(const SCMap& m, std::size_t j, G&& g, double s_lo, double s_hi) {
    const double L = m.polygon.side_lengths[j];
    if (!(s_lo > 0.0 && s_hi < L && s_lo < s_hi)) input_error("ProfileSupport", "profile must vanish near the vertices");
    const double t_lo = m.offset_at_arclength(j, s_lo);
    const double t_hi = m.offset_at_arclength(j, L - s_hi, true);
    const double v = m.side_integral(j, t_lo, t_hi, [&](double th, double d0, double d1) {
        const double s = d0 <= d1 ? m.arclength_from_start(j, d0) : L - m.arclength_to_end(j, d1);
        const double sp = m.speed(th, j, d0, d1);
        return (0.5 - m.schwarzian_x_theta(th, j, d0, d1)) / sp * g(s);
    });
    return -v / (6.0 * kPi);
}

namespace detail {

// int over the arc z = z_k + r e^{i phi}, phi from pi to 0, of {z,x} dx = -{x,z}/x'(z) dz.
inline cplx arc_schwarzian_integral(const SCMap& m, std::size_t k, double r, int npts) {
    const Rule g = gauss_legendre(npts);
    cplx s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double phi = 0.5 * kPi * (1.0 - g.x[i]); // pi .. 0 as x goes -1 .. 1
        const cplx e = std::polar(1.0, phi);
        const cplx z = m.prevertices[k] + r * e;
        const cplx dz = cplx(0.0, 1.0) * r * e * (-0.5 * kPi);
        s += g.w[i] * (-m.schwarzian_xz(z) / m.dxdz(z)) * dz;
    }
    return s;
}

// Offset in theta of the point z_k + eps (sign +1) or z_k - eps (sign -1) from theta_k.
inline double theta_offset(double zk, double eps) { return 2.0 * std::atan(eps / (1.0 + zk * (zk + eps))); }

inline double side_shift_by_contour(const SCMap& m, std::size_t j, const std::vector<double>& radius, int npts) {
    const std::size_t n = m.size();
    const std::size_t a = j, b = (j + 1) % n;
    const double za = m.prevertices[a], zb = m.prevertices[b];
    const double off_a = theta_offset(za, radius[a]);
    const double off_b = theta_offset(zb, -radius[b]);
    const double span = m.side_span(j);
    if (!(off_a + std::abs(off_b) < span)) input_error("ContourThroughVertex", "contour arcs overlap on a side");
    // straight part of side j between the two contour ends
    const double seg = m.side_integral(j, off_a, std::abs(off_b), [&](double th, double d0, double d1) {
        return (m.schwarzian_x_theta(th, j, d0, d1) - 0.5) / m.speed(th, j, d0, d1);
    });
    const double al_a = m.polygon.angles[a], al_b = m.polygon.angles[b];
    const cplx tau = m.polygon.tangent(j);
    const cplx ia = arc_schwarzian_integral(m, a, radius[a], npts);
    const cplx ib = arc_schwarzian_integral(m, b, radius[b], npts);
    const cplx corners = -(std::polar(1.0, al_a) / std::sin(al_a)) * tau * ia + (std::polar(1.0, -al_b) / std::sin(al_b)) * tau * ib;
    return (seg + corners.imag()) / (6.0 * kPi);
}

} // namespace detail

// Interior-contour evaluation for fields that are parallel side shifts (c1 = 0 on
// every side); the singular vertex pieces are replaced by arcs around the prevertices.
inline DeterminantVariation contour_shift_integral(const SCMap& m, const DeformationField& f, const VarConfig& cfg = {}) {
    const std::size_t n = m.size();
    if (f.c0.size() != n || f.c1.size() != n) input_error("FieldSize", "field does not match the polygon");
    double scale = 0.0;
    for (double c : f.c0) scale = std::max(scale, std::abs(c));
    for (std::size_t j = 0; j < n; ++j)
        if (std::abs(f.c1[j]) * m.polygon.side_lengths[j] > 1e-10 * std::max(scale, 1e-300))
            input_error("NotShiftField", "contour route needs a parallel-shift field (c1 = 0)");
    auto evaluate = [&](double factor) {
        std::vector<double> radius(n);
        for (std::size_t k = 0; k < n; ++k) {
            double gap = INFINITY;
            if (k > 0) gap = std::min(gap, m.prevertices[k] - m.prevertices[k - 1]);
            if (k + 1 < n) gap = std::min(gap, m.prevertices[k + 1] - m.prevertices[k]);
            radius[k] = factor * gap;
        }
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (f.c0[j] != 0.0) s += f.c0[j] * detail::side_shift_by_contour(m, j, radius, cfg.contour_points);
        return s;
    };
    DeterminantVariation v;
    v.route = "contour_shift";
    v.boundary_term = evaluate(cfg.contour_eps);
    v.contour_change = std::abs(evaluate(0.5 * cfg.contour_eps) - v.boundary_term);
    v.corner_term = corner_term(m.polygon, f.delta_angles);
    v.total = v.boundary_term + v.corner_term;
    return v;
}

} // namespace polydet

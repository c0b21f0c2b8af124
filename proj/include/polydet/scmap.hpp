#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "quadrature.hpp"

namespace polydet {

struct SCConfig {
    double tol = 1e-12;          // Newton tolerance on the log side-ratio residual
    int max_iter = 200;
    int order = 24;              // per-panel quadrature order
    double accept = 1e-10;       // largest acceptable relative side-length residual
    double init_jitter = 0.0;    // random perturbation of the initial guess
    std::uint64_t seed = 0;
};

struct VertexExpansion {
    std::size_t vertex_index = 0;
    double exponent = 1.0;        // alpha_i / pi
    cplx leading = 0.0;           // C_i
    std::vector<cplx> coeffs;     // c_1 ... c_order of the regular factor
};

// Schwarz-Christoffel map of the upper half-plane onto a convex polygon,
//   x(z) = base + C int prod_k (z - z_k)^{beta_k} dz,   beta_k = alpha_k/pi - 1.
// Prevertices are also stored as circle angles theta_k with z = -cot(theta/2);
// boundary quantities are evaluated in theta so that the side through z = inf
// needs no special treatment.
class SCMap {
public:
    Polygon polygon;
    std::vector<double> theta;       // increasing, in (0, 2 pi)
    std::vector<double> prevertices; // z_k
    std::vector<double> beta;
    cplx C = 1.0;
    cplx base = 0.0;                 // image of z_0
    std::vector<cplx> vertex_images;
    std::vector<double> mapped_side_lengths;
    double residual = 0.0;           // largest relative side-length mismatch
    int iterations = 0;
    bool crowding = false;
    int order = 24;

    SCMap() = default;

    SCMap(const Polygon& p, std::vector<double> th, int quad_order = 24) : polygon(p), theta(std::move(th)), order(quad_order) {
        const std::size_t n = p.size();
        if (theta.size() != n) internal_error("SCMapSize", "prevertex count mismatch");
        beta.resize(n);
        prevertices.resize(n);
        log_sin_half_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            beta[k] = p.angles[k] / kPi - 1.0;
            prevertices[k] = -1.0 / std::tan(0.5 * theta[k]);
            log_sin_half_[k] = std::log(std::sin(0.5 * theta[k]));
        }
        for (std::size_t k = 0; k + 1 < n; ++k) {
            if (!(theta[k + 1] > theta[k])) internal_error("SCMapOrder", "prevertices must increase");
            if (theta[k + 1] - theta[k] < 1e-12) crowding = true;
        }
        // Fix C from the first side, then integrate the boundary for the remaining images.
        C = 1.0;
        mapped_side_lengths.assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) mapped_side_lengths[j] = side_integral(j, 0.0, 0.0, [&](double th, double d0, double d1) { return speed(th, j, d0, d1); });
        const double scale = p.side_lengths[0] / mapped_side_lengths[0];
        const double rot = std::arg(p.tangent(0)) - phase_raw(0);
        C = std::polar(scale, rot);
        for (double& L : mapped_side_lengths) L *= scale;
        base = p.vertices[0];
        vertex_images.resize(n);
        vertex_images[0] = base;
        for (std::size_t j = 0; j + 1 < n; ++j) vertex_images[j + 1] = vertex_images[j] + side_direction(j) * mapped_side_lengths[j];
        residual = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            residual = std::max(residual, std::abs(mapped_side_lengths[j] / p.side_lengths[j] - 1.0));
        anchor_ = map_forward(cplx(0.0, 1.0));
    }

    std::size_t size() const { return theta.size(); }

    // Circle angle of the end of side j; exceeds 2 pi for the last side.
    double theta_end(std::size_t j) const { return j + 1 < size() ? theta[j + 1] : theta[0] + 2.0 * kPi; }
    double side_span(std::size_t j) const { return theta_end(j) - theta[j]; }

    static double theta_of_z(double z) { return kPi + 2.0 * std::atan(z); }

    // log |dx/dtheta|.  Offsets d0 = theta - theta_j and d1 = theta_end(j) - theta are
    // used verbatim for the two endpoint factors of side j when j is valid.
    double log_speed(double th, std::size_t j = SIZE_MAX, double d0 = 0.0, double d1 = 0.0) const {
        const std::size_t n = size();
        double s = std::log(0.5 * std::abs(C));
        for (std::size_t k = 0; k < n; ++k) {
            double d;
            if (j != SIZE_MAX && k == j) d = d0;
            else if (j != SIZE_MAX && k == (j + 1) % n) d = d1;
            else d = th - theta[k];
            s += beta[k] * (std::log(std::abs(std::sin(0.5 * d))) - log_sin_half_[k]);
        }
        return s;
    }

    double speed(double th, std::size_t j = SIZE_MAX, double d0 = 0.0, double d1 = 0.0) const {
        return std::exp(log_speed(th, j, d0, d1));
    }

    // Schwarzian {x, theta} along the boundary.
    double schwarzian_x_theta(double th, std::size_t j = SIZE_MAX, double d0 = 0.0, double d1 = 0.0) const {
        const std::size_t n = size();
        double p = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double d;
            if (j != SIZE_MAX && k == j) d = d0;
            else if (j != SIZE_MAX && k == (j + 1) % n) d = -d1;
            else d = th - theta[k];
            const double sn = std::sin(0.5 * d), cs = std::cos(0.5 * d);
            p += 0.5 * beta[k] * cs / sn;
            dp -= 0.25 * beta[k] / (sn * sn);
        }
        return dp - 0.5 * p * p;
    }

    cplx side_direction(std::size_t j) const { return std::polar(1.0, std::arg(C) + phase_raw(j)); }

    // Integral over theta in [theta_j + a_off, theta_end(j) - b_off] of f(theta, d0, d1),
    // where f may carry the endpoint singularities of side j.  Exponents ea / eb describe
    // the behaviour at an endpoint that coincides with a vertex.
    template <class F>
    double side_integral(std::size_t j, double a_off, double b_off, F&& f, double ea = NAN, double eb = NAN,
                         int grade_levels = 0) const {
        const std::size_t n = size();
        const double span = side_span(j);
        const double lo = a_off, hi = span - b_off;
        if (!(hi > lo)) return 0.0;
        const double e_left = a_off == 0.0 ? (std::isnan(ea) ? beta[j] : ea) : 0.0;
        const double e_right = b_off == 0.0 ? (std::isnan(eb) ? beta[(j + 1) % n] : eb) : 0.0;
        // Integration variable is the offset t = theta - theta_j.  Both vertex
        // entries below land exactly on t = 0 and t = span.
        std::vector<std::complex<double>> sing;
        for (std::size_t k = 0; k < n; ++k)
            for (int m = -1; m <= 2; ++m) {
                const double t = theta[k] + 2.0 * kPi * m - theta[j];
                if ((t == 0.0 && a_off == 0.0) || (t == span && b_off == 0.0)) continue;
                sing.emplace_back(t, 0.0);
            }
        PanelOptions opt;
        opt.order = order;
        // rgap: exact distance from the panel's right end to the end of the side
        auto run = [&](double l, double h, double el, double er, double rgap) {
            Rule r = compound_rule(l, h, el, er, sing, opt);
            double s = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * f(theta[j] + r.x[i], r.x[i], rgap + r.db[i]);
            return s;
        };
        if (grade_levels <= 0) return run(lo, hi, e_left, e_right, b_off);
        // Geometric grading toward vertex ends.
        const double ratio = 0.15;
        const double mid = lo + 0.5 * (hi - lo);
        double total = 0.0, l = lo, h = hi;
        if (a_off == 0.0) {
            total += run(lo, lo + (mid - lo) * std::pow(ratio, grade_levels), e_left, 0.0, span - (lo + (mid - lo) * std::pow(ratio, grade_levels)));
            for (int g = grade_levels; g > 0; --g) {
                const double a = lo + (mid - lo) * std::pow(ratio, g);
                const double b = lo + (mid - lo) * std::pow(ratio, g - 1);
                total += run(a, b, 0.0, 0.0, span - b);
            }
            l = mid;
        }
        if (b_off == 0.0) {
            for (int g = grade_levels; g >= 0; --g) {
                const double gap_r = (hi - mid) * std::pow(ratio, g);
                const double gap_l = g > 0 ? (hi - mid) * std::pow(ratio, g - 1) : 0.0;
                if (g == grade_levels) total += run(hi - gap_r, hi, 0.0, e_right, 0.0);
                if (g > 0) total += run(hi - gap_l, hi - gap_r, 0.0, 0.0, gap_r);
            }
            h = mid;
        }
        if (h > l) total += run(l, h, 0.0, 0.0, span - h);
        return total;
    }

    // Integral of f(theta, d0, d1) over the first `len` of side j measured from its start
    // (from_end = false) or its end (from_end = true).  The offset from the chosen end is
    // exact at every node, so tiny lengths keep full relative accuracy.
    template <class F>
    double end_integral(std::size_t j, bool from_end, double len, F&& f) const {
        const std::size_t n = size();
        if (!(len > 0.0)) return 0.0;
        const double span = side_span(j);
        const double e = from_end ? beta[(j + 1) % n] : beta[j];
        std::vector<std::complex<double>> sing;
        for (std::size_t k = 0; k < n; ++k)
            for (int m = -1; m <= 2; ++m) {
                const double t0 = theta[k] + 2.0 * kPi * m - theta[j];
                const double t = from_end ? span - t0 : t0;
                if (t == 0.0) continue;
                sing.emplace_back(t, 0.0);
            }
        PanelOptions opt;
        opt.order = order;
        Rule r = compound_rule(0.0, len, e, 0.0, sing, opt);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double t = r.da[i];
            if (from_end) s += r.w[i] * f(theta_end(j) - t, span - t, t);
            else s += r.w[i] * f(theta[j] + t, t, span - t);
        }
        return s;
    }

    // Arclength from vertex j to the boundary point at offset d0 = theta - theta_j.
    double arclength_from_start(std::size_t j, double d0) const {
        return end_integral(j, false, d0, [&](double th, double a, double b) { return speed(th, j, a, b); });
    }

    // Arclength from the boundary point at offset d1 = theta_end(j) - theta to vertex j+1.
    double arclength_to_end(std::size_t j, double d1) const {
        return end_integral(j, true, d1, [&](double th, double a, double b) { return speed(th, j, a, b); });
    }

    // Offset in theta, measured from the start of side j (or from its end), of the
    // point at arclength s from that same end.
    double offset_at_arclength(std::size_t j, double s, bool from_end = false) const {
        const double L = mapped_side_lengths[j];
        const double span = side_span(j);
        if (s <= 0.0) return 0.0;
        if (s >= L) return span;
        const double e = from_end ? beta[(j + 1) % size()] : beta[j];
        auto len = [&](double t) {
            return end_integral(j, from_end, t, [&](double th, double a, double b) { return speed(th, j, a, b); });
        };
        double lo = 0.0, hi = span;
        double t = span * std::pow(s / L, 1.0 / (1.0 + e));
        for (int it = 0; it < 200; ++it) {
            const double f = len(t) - s;
            if (f > 0) hi = t;
            else lo = t;
            const double fp = from_end ? speed(theta_end(j) - t, j, span - t, t) : speed(theta[j] + t, j, t, span - t);
            double next = t - f / fp;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - t) <= 1e-15 * t || hi - lo <= 1e-15 * hi) return next;
            t = next;
        }
        numerical_error("NoConvergence", "arclength inversion failed");
    }

    // dx/dz for z in the closed upper half-plane.
    cplx dxdz(cplx z) const {
        cplx s = 0.0;
        for (std::size_t k = 0; k < size(); ++k) s += beta[k] * uhp_log(z - prevertices[k]);
        return C * std::exp(s);
    }

    // {x, z} in closed form.
    cplx schwarzian_xz(cplx z) const {
        cplx s1 = 0.0, s2 = 0.0;
        for (std::size_t k = 0; k < size(); ++k) {
            const cplx d = z - prevertices[k];
            if (d == 0.0) input_error("PoleQuery", "Schwarzian requested at a prevertex");
            s1 += beta[k] / d;
            s2 += beta[k] / (d * d);
        }
        return -s2 - 0.5 * s1 * s1;
    }

    // x(z), integrating from the nearest prevertex along a straight segment.
    cplx map_forward(cplx z) const {
        if (z.imag() < 0.0) input_error("LowerHalfPlane", "map_forward needs Im z >= 0");
        if (z.imag() == 0.0) return boundary_point(theta_of_z(z.real()));
        std::size_t k0 = 0;
        for (std::size_t k = 1; k < size(); ++k)
            if (std::abs(z - prevertices[k]) < std::abs(z - prevertices[k0])) k0 = k;
        return map_forward_from(z, k0);
    }

    // x(z) integrated from prevertex k0.
    cplx map_forward_from(cplx z, std::size_t k0) const {
        const std::size_t n = size();
        const cplx zk = prevertices[k0];
        const cplx delta = z - zk;
        std::vector<std::complex<double>> sing;
        for (std::size_t k = 0; k < n; ++k)
            if (k != k0) sing.push_back((prevertices[k] - zk) / delta);
        PanelOptions opt;
        opt.order = order;
        Rule r = compound_rule(0.0, 1.0, beta[k0], 0.0, sing, opt);
        cplx acc = 0.0;
        const cplx log_delta = uhp_log(delta);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const cplx zeta = zk + r.x[i] * delta;
            cplx s = beta[k0] * (std::log(r.da[i]) + log_delta);
            for (std::size_t k = 0; k < n; ++k)
                if (k != k0) s += beta[k] * uhp_log(zeta - prevertices[k]);
            acc += r.w[i] * std::exp(s);
        }
        return vertex_images[k0] + C * acc * delta;
    }

    // Boundary image of the circle angle th (any real value).
    cplx boundary_point(double th) const {
        const std::size_t n = size();
        double t = std::fmod(th, 2.0 * kPi);
        if (t < 0) t += 2.0 * kPi;
        std::size_t j = n - 1;
        for (std::size_t k = 0; k + 1 < n; ++k)
            if (t >= theta[k] && t < theta[k + 1]) j = k;
        if (j == n - 1 && t < theta[0]) t += 2.0 * kPi;
        const double d0 = t - theta[j], d1 = theta_end(j) - t;
        if (d0 <= d1) return vertex_images[j] + side_direction(j) * arclength_from_start(j, d0);
        return vertex_images[(j + 1) % n] - side_direction(j) * arclength_to_end(j, d1);
    }

    cplx map_inverse(cplx x) const {
        const double scale = polygon.perimeter;
        for (std::size_t k = 0; k < size(); ++k)
            if (std::abs(x - polygon.vertices[k]) < 1e-13 * scale) input_error("VertexQuery", "inverse requested at a vertex");
        // Close to a vertex, invert the leading term x - x_k = C_k (z - z_k)^{alpha_k/pi}.
        std::size_t kn = 0;
        for (std::size_t k = 1; k < size(); ++k)
            if (std::abs(x - polygon.vertices[k]) < std::abs(x - polygon.vertices[kn])) kn = k;
        const double near_r = 0.05 * std::min(polygon.side_lengths[kn], polygon.side_lengths[(kn + size() - 1) % size()]);
        if (std::abs(x - polygon.vertices[kn]) < near_r) {
            const cplx w = (x - polygon.vertices[kn]) / leading_coefficient(kn);
            const double e = kPi / polygon.angles[kn];
            const double ph = std::clamp(std::arg(w), 0.0, polygon.angles[kn]);
            return newton_inverse(x, prevertices[kn] + std::polar(std::pow(std::abs(w), e), ph * e));
        }
        // ODE dz/ds = (x - x_a) / x'(z) from the anchor z = i, then Newton.
        const cplx za(0.0, 1.0);
        const cplx xa = anchor();
        cplx z = za;
        const int steps = 32;
        const cplx dx = (x - xa) / double(steps);
        auto rhs = [&](cplx zz) {
            if (zz.imag() < 0) zz.imag(0.0);
            return dx / dxdz(zz);
        };
        for (int s = 0; s < steps; ++s) {
            const cplx k1 = rhs(z), k2 = rhs(z + 0.5 * k1), k3 = rhs(z + 0.5 * k2), k4 = rhs(z + k3);
            z += (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            if (z.imag() < 0) z.imag(0.0);
        }
        return newton_inverse(x, z);
    }

    // C_k = (pi/alpha_k) C prod_{m != k} (z_k - z_m)^{beta_m}
    cplx leading_coefficient(std::size_t k) const {
        cplx s = 0.0;
        for (std::size_t m = 0; m < size(); ++m)
            if (m != k) s += beta[m] * uhp_log(cplx(prevertices[k] - prevertices[m], 0.0));
        return C * kPi / polygon.angles[k] * std::exp(s);
    }

    cplx newton_inverse(cplx x, cplx z) const {
        const double scale = polygon.perimeter;
        cplx best = z;
        double best_f = INFINITY;
        for (int it = 0; it < 50; ++it) {
            const cplx f = map_forward(z) - x;
            if (std::abs(f) < best_f) {
                best_f = std::abs(f);
                best = z;
            }
            if (best_f <= 1e-14 * scale) break;
            const cplx step = f / dxdz(z);
            cplx next = z - step;
            if (next.imag() < 0.0) next.imag(0.1 * z.imag());
            if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
            z = next;
        }
        if (best_f <= 1e-10 * scale) return best;
        numerical_error("NewtonDivergence", "inverse map did not converge");
    }

    // {z, x} = -(dz/dx)^2 {x, z}
    cplx schwarzian_zx(cplx x) const {
        const cplx z = map_inverse(x);
        const cplx d = dxdz(z);
        return -schwarzian_xz(z) / (d * d);
    }

    VertexExpansion vertex_expansion(std::size_t i, int ord, double radius = 0.0) const {
        const std::size_t n = size();
        if (ord < 0 || ord > 6) input_error("ExpansionOrder", "order must be in 0..6");
        const double zi = prevertices[i];
        double gap = INFINITY;
        if (i > 0) gap = std::min(gap, zi - prevertices[i - 1]);
        if (i + 1 < n) gap = std::min(gap, prevertices[i + 1] - zi);
        if (radius <= 0.0) radius = 0.25 * gap;
        if (radius > 0.5 * gap) input_error("CircleTooLarge", "expansion circle reaches a neighbouring prevertex");
        const int N = 64;
        std::vector<cplx> h(N);
        for (int m = 0; m < N; ++m) {
            const cplx z = zi + std::polar(radius, 2.0 * kPi * m / N);
            cplx s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i) continue;
                cplx lg = std::log(z - prevertices[k]);
                if (prevertices[k] > zi && lg.imag() < 0) lg += cplx(0.0, 2.0 * kPi);
                s += beta[k] * lg;
            }
            h[m] = C * std::exp(s);
        }
        VertexExpansion e;
        e.vertex_index = i;
        e.exponent = polygon.angles[i] / kPi;
        std::vector<cplx> coef(ord + 1);
        for (int q = 0; q <= ord; ++q) {
            cplx s = 0.0;
            for (int m = 0; m < N; ++m) s += h[m] * std::polar(1.0, -2.0 * kPi * m * q / N);
            coef[q] = s / double(N) / std::pow(radius, q);
        }
        e.leading = coef[0] / e.exponent;
        for (int q = 1; q <= ord; ++q) e.coeffs.push_back(coef[q] / (q + e.exponent) / e.leading);
        return e;
    }

    cplx eval_expansion(const VertexExpansion& e, cplx z) const {
        const cplx u = z - prevertices[e.vertex_index];
        cplx s = 1.0, up = 1.0;
        for (const auto& c : e.coeffs) {
            up *= u;
            s += c * up;
        }
        return vertex_images[e.vertex_index] + e.leading * std::exp(e.exponent * uhp_log(u)) * s;
    }

    static cplx uhp_log(cplx d) {
        double a = std::atan2(d.imag(), d.real());
        if (a < 0.0) a = (d.imag() == 0.0) ? kPi : a; // signed zero on the negative axis
        return {std::log(std::abs(d)), a};
    }

    // Image of z = i.
    cplx anchor() const { return anchor_; }

private:
    std::vector<double> log_sin_half_;
    cplx anchor_ = 0.0;

    // arg of dx/dtheta on side j, without arg(C)
    double phase_raw(std::size_t j) const {
        double s = 0.0;
        for (std::size_t k = j + 1; k < size(); ++k) s += beta[k];
        return kPi * s;
    }
};

namespace detail {

// Side lengths (up to the common factor |C|) for prevertices 0 = z_0 < z_1 = 1 < ... < z_{n-2}, z_{n-1} = inf.
inline std::vector<double> finite_side_lengths(const std::vector<double>& z, const std::vector<double>& beta, int order) {
    const std::size_t m = z.size(); // finite prevertices
    std::vector<double> L(m - 1);
    PanelOptions opt;
    opt.order = order;
    for (std::size_t j = 0; j + 1 < m; ++j) {
        const double a = z[j], b = z[j + 1];
        std::vector<std::complex<double>> sing;
        for (std::size_t k = 0; k < m; ++k)
            if (k != j && k != j + 1) sing.emplace_back(z[k], 0.0);
        Rule r = compound_rule(a, b, beta[j], beta[j + 1], sing, opt);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            double lg = beta[j] * std::log(r.da[i]) + beta[j + 1] * std::log(r.db[i]);
            for (std::size_t k = 0; k < m; ++k)
                if (k != j && k != j + 1) lg += beta[k] * std::log(std::abs(r.x[i] - z[k]));
            s += r.w[i] * std::exp(lg);
        }
        L[j] = s;
    }
    return L;
}

inline std::vector<double> prevertices_from_gaps(const Eigen::VectorXd& u, std::size_t n) {
    std::vector<double> z(n - 1);
    z[0] = 0.0;
    if (n >= 3) z[1] = 1.0;
    for (std::size_t k = 2; k + 1 < n; ++k) z[k] = z[k - 1] + std::exp(u(k - 2));
    return z;
}

// Moves points on the unit circle by disk automorphisms until their mean is zero.
inline std::vector<cplx> conformal_barycenter_normalize(std::vector<cplx> pts) {
    for (int it = 0; it < 2000; ++it) {
        cplx m = 0.0;
        for (const auto& p : pts) m += p;
        m /= double(pts.size());
        if (std::abs(m) < 1e-15) break;
        const cplx a = 0.5 * m;
        for (auto& p : pts) {
            p = (p - a) / (1.0 - std::conj(a) * p);
            p /= std::abs(p);
        }
    }
    return pts;
}

} // namespace detail

inline SCMap solve_parameter_problem(const Polygon& p, const SCConfig& cfg = {}) {
    const std::size_t n = p.size();
    std::vector<double> beta(n);
    for (std::size_t k = 0; k < n; ++k) beta[k] = p.angles[k] / kPi - 1.0;
    const std::size_t nu = n - 3;

    Eigen::VectorXd u = Eigen::VectorXd::Zero(nu);
    // Initial guess: gaps proportional to the corresponding side lengths.
    for (std::size_t k = 0; k < nu; ++k) u(k) = std::log(p.side_lengths[k + 1] / p.side_lengths[0]);
    if (cfg.init_jitter > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> N(0.0, cfg.init_jitter);
        for (std::size_t k = 0; k < nu; ++k) u(k) += N(rng);
    }
    Eigen::VectorXd target(nu);
    for (std::size_t k = 0; k < nu; ++k) target(k) = std::log(p.side_lengths[k + 1] / p.side_lengths[0]);

    auto residual = [&](const Eigen::VectorXd& uu) {
        const auto z = detail::prevertices_from_gaps(uu, n);
        const auto L = detail::finite_side_lengths(z, beta, cfg.order);
        Eigen::VectorXd F(nu);
        for (std::size_t k = 0; k < nu; ++k) F(k) = std::log(L[k + 1] / L[0]) - target(k);
        return F;
    };

    int it = 0;
    if (nu > 0) {
        Eigen::VectorXd F = residual(u);
        double mu = 0.0; // Levenberg-Marquardt damping once plain Newton stalls
        for (; it < cfg.max_iter && F.lpNorm<Eigen::Infinity>() > cfg.tol; ++it) {
            Eigen::MatrixXd J(nu, nu);
            for (std::size_t k = 0; k < nu; ++k) {
                Eigen::VectorXd up = u;
                const double h = 1e-7 * std::max(1.0, std::abs(u(k)));
                up(k) += h;
                J.col(k) = (residual(up) - F) / h;
            }
            bool improved = false;
            for (int attempt = 0; attempt < 40 && !improved; ++attempt) {
                Eigen::VectorXd step;
                if (mu == 0.0) step = -J.fullPivLu().solve(F);
                else step = -(J.transpose() * J + mu * Eigen::MatrixXd::Identity(nu, nu)).ldlt().solve(J.transpose() * F);
                double lam = 1.0;
                for (int ls = 0; ls < 30; ++ls, lam *= 0.5) {
                    Eigen::VectorXd trial = u + lam * step;
                    Eigen::VectorXd Ft;
                    try {
                        Ft = residual(trial);
                    } catch (const Error&) {
                        continue;
                    }
                    if (Ft.allFinite() && Ft.norm() < (1.0 - 1e-4 * lam) * F.norm()) {
                        u = trial;
                        F = Ft;
                        improved = true;
                        break;
                    }
                }
                if (!improved) mu = (mu == 0.0) ? 1e-6 : mu * 10.0;
                else if (mu > 0.0) mu *= 0.1;
            }
            if (!improved) break;
        }
        if (F.lpNorm<Eigen::Infinity>() > std::max(cfg.tol, 1e-11))
            numerical_error("NoConvergence", "parameter problem residual " + std::to_string(F.lpNorm<Eigen::Infinity>()));
    }

    // Circle angles: z -> pi + 2 atan z, with z_{n-1} = inf at 2 pi.
    const auto z = detail::prevertices_from_gaps(u, n);
    std::vector<cplx> pts(n);
    for (std::size_t k = 0; k + 1 < n; ++k) pts[k] = std::polar(1.0, kPi + 2.0 * std::atan(z[k]));
    pts[n - 1] = 1.0;
    pts = detail::conformal_barycenter_normalize(pts);
    std::vector<double> phi(n);
    phi[0] = std::arg(pts[0]);
    for (std::size_t k = 1; k < n; ++k) {
        double a = std::arg(pts[k]);
        while (a <= phi[k - 1]) a += 2.0 * kPi;
        phi[k] = a;
    }
    const double mid = 0.5 * (phi[n - 1] + phi[0] + 2.0 * kPi);
    std::vector<double> th(n);
    for (std::size_t k = 0; k < n; ++k) th[k] = phi[k] - mid + 2.0 * kPi;

    SCMap m(p, th, cfg.order);
    m.iterations = it;
    if (m.residual > cfg.accept)
        numerical_error("NoConvergence", "side-length residual " + std::to_string(m.residual));
    return m;
}

} // namespace polydet

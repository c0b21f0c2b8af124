#pragma once

#include <cstdio>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/expint.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "spectrum.hpp"

namespace polydet {

inline constexpr double kEulerGamma = 0.57721566490153286061;

struct HeatCoefficients {
    double a1 = 0.0; // |P|/4pi, coefficient of 1/tau
    double a2 = 0.0; // -|dP|/8, coefficient of 1/sqrt(pi tau)
    double b1 = 0.0; // corner constant term
    double area = 0.0;
    double perimeter = 0.0;
    // Distance scale controlling the exponentially small heat-trace remainder.
    double length_scale = 0.0;
};

inline double polygon_width_scale(const Polygon& p) {
    const std::size_t n = p.size();
    double w = INFINITY;
    for (double L : p.side_lengths) w = std::min(w, L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || (j + 1) % n == i) continue;
            w = std::min(w, point_segment_distance(p.vertices[i], p.vertex(j), p.vertex(j + 1)));
        }
    return w;
}

inline HeatCoefficients heat_coefficients(const Polygon& p) {
    HeatCoefficients h;
    h.area = p.area;
    h.perimeter = p.perimeter;
    h.a1 = p.area / (4.0 * kPi);
    h.a2 = -p.perimeter / 8.0;
    h.b1 = corner_beta1(p);
    h.length_scale = polygon_width_scale(p);
    return h;
}

// Exact d log det under unit-rate dilation.
inline double scaling_variation(const Polygon& p) { return -2.0 * corner_beta1(p); }

namespace detail {

// log det for the a x b rectangle, series in q = exp(-2 pi b / a).
inline double rectangle_logdet_series(double a, double b) {
    const double q = std::exp(-2.0 * kPi * b / a);
    double s = -kPi * b / (12.0 * a) - 0.5 * std::log(2.0 * a);
    double qm = q;
    for (int m = 1; m < 10000 && qm > 1e-300; ++m) {
        s += std::log1p(-qm);
        if (qm < 1e-18) break;
        qm *= q;
    }
    return s;
}

} // namespace detail

// The 1D factor in x gives -zeta'(0) of the interval plus a product over the
// transverse modes; the b-direction theta sum reduces to the eta-type product above.
inline double rectangle_logdet_exact(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) input_error("BadRectangle", "side lengths must be positive");
    return a >= b ? detail::rectangle_logdet_series(a, b) : detail::rectangle_logdet_series(b, a);
}

struct ZetaConfig {
    double tau0 = 0.0;           // <= 0 selects tau0 = length_scale / sqrt(cutoff)
    double tail_tol = 1e-6;      // TailNotConverged threshold on error_estimate
    double tau0_shift = 0.8;     // diagnostic: recompute at tau0 * shift
    double cutoff_shift = 0.75;  // diagnostic: recompute with cutoff * shift
};

struct LogDet {
    double value = 0.0;
    double error_estimate = 0.0;
    int n_eigs_used = 0;
    struct Diagnostics {
        double tau0 = 0.0;
        double cutoff = 0.0;
        double tail = 0.0;
        double tau0_change = 0.0;
        double cutoff_change = 0.0;
        double heat_residual = 0.0; // discrete + tail heat trace minus asymptotics at 2 tau0
    } diagnostics;
};

namespace detail {

// int_cut^inf E1(lambda tau0) dN_W(lambda) with the two-term Weyl density.
inline double weyl_tail(const HeatCoefficients& h, double tau0, double cut) {
    const double x0 = cut * tau0;
    const double e1 = boost::math::expint(1, x0);
    const double area_part = (std::exp(-x0) - x0 * e1) / tau0;
    const double edge_part =
        (2.0 * std::sqrt(kPi) * boost::math::erfc(std::sqrt(x0)) - 2.0 * std::sqrt(x0) * e1) / std::sqrt(tau0);
    return h.area / (4.0 * kPi) * area_part - h.perimeter / (8.0 * kPi) * edge_part;
}

inline double logdet_split(const std::vector<double>& eigs, const HeatCoefficients& h, double tau0, double cut,
                           double* tail_out = nullptr, int* used = nullptr) {
    const double b = h.a2 / std::sqrt(kPi);
    double sum = 0.0;
    int n = 0;
    for (double lam : eigs) {
        if (lam >= cut) break;
        sum += boost::math::expint(1, lam * tau0);
        ++n;
    }
    const double tail = weyl_tail(h, tau0, cut);
    if (tail_out) *tail_out = tail;
    if (used) *used = n;
    const double zp = kEulerGamma * h.b1 + h.b1 * std::log(tau0) - h.a1 / tau0 - 2.0 * b / std::sqrt(tau0) + sum + tail;
    return -zp;
}

// Heat trace reconstructed from the spectrum minus its small-time asymptotics.
inline double heat_residual(const std::vector<double>& eigs, const HeatCoefficients& h, double tau, double cut) {
    double k = 0.0;
    for (double lam : eigs) {
        if (lam >= cut) break;
        k += std::exp(-lam * tau);
    }
    // tail of sum exp(-lambda tau) over the Weyl density above cut
    const double x0 = cut * tau;
    k += h.area / (4.0 * kPi) * std::exp(-x0) / tau -
         h.perimeter / (8.0 * kPi) * std::sqrt(kPi / tau) * boost::math::erfc(std::sqrt(x0));
    return k - (h.a1 / tau + h.a2 / std::sqrt(kPi * tau) + h.b1);
}

} // namespace detail

inline LogDet zeta_logdet(const Spectrum& s, const HeatCoefficients& h, const ZetaConfig& cfg = {}) {
    if (s.eigenvalues.empty()) input_error("EmptySpectrum", "no eigenvalues supplied");
    const double cut = s.lambda_max;
    const double tau0 = cfg.tau0 > 0.0 ? cfg.tau0 : h.length_scale / std::sqrt(cut);
    LogDet out;
    out.value = detail::logdet_split(s.eigenvalues, h, tau0, cut, &out.diagnostics.tail, &out.n_eigs_used);
    const double v_tau = detail::logdet_split(s.eigenvalues, h, tau0 * cfg.tau0_shift, cut);
    const double v_cut = detail::logdet_split(s.eigenvalues, h, tau0, cut * cfg.cutoff_shift);
    out.diagnostics.tau0 = tau0;
    out.diagnostics.cutoff = cut;
    out.diagnostics.tau0_change = std::abs(v_tau - out.value);
    out.diagnostics.cutoff_change = std::abs(v_cut - out.value);
    out.diagnostics.heat_residual = detail::heat_residual(s.eigenvalues, h, 2.0 * tau0, cut);
    out.error_estimate = out.diagnostics.tau0_change + out.diagnostics.cutoff_change;
    if (out.error_estimate > cfg.tail_tol) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "split/tail diagnostics differ by %.3e (lambda_max %g)", out.error_estimate, cut);
        numerical_error("TailNotConverged", msg);
    }
    return out;
}

} // namespace polydet

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace polydet {

// Holomorphic map of the unit disk z(w) = sum a_k w^k onto a smooth domain.
struct SmoothDomain {
    std::vector<cplx> taylor;

    struct Jet {
        cplx z, d1, d2, d3;
    };

    Jet jet(cplx w) const {
        Jet j{0.0, 0.0, 0.0, 0.0};
        for (std::size_t k = taylor.size(); k-- > 0;) {
            j.d3 = j.d3 * w + 3.0 * j.d2;
            j.d2 = j.d2 * w + 2.0 * j.d1;
            j.d1 = j.d1 * w + j.z;
            j.z = j.z * w + taylor[k];
        }
        return j;
    }
};

// Taylor series as a function; used for the boundary velocity V(w).
inline cplx eval_series(const std::vector<cplx>& c, cplx w) {
    cplx s = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) s = s * w + c[k];
    return s;
}

inline SmoothDomain perturbed(const SmoothDomain& d, const std::vector<cplx>& V, double eps) {
    SmoothDomain out = d;
    if (out.taylor.size() < V.size()) out.taylor.resize(V.size(), 0.0);
    for (std::size_t k = 0; k < V.size(); ++k) out.taylor[k] += eps * V[k];
    return out;
}

// z' must not vanish on the closed disk: no zeros on a slightly larger circle
// and winding number zero there.
inline void check_domain(const SmoothDomain& d, double margin = 1e-3, int n_grid = 1024) {
    if (d.taylor.size() < 2) input_error("MapDegenerate", "map must have a linear term");
    double wind = 0.0, min_abs = INFINITY;
    const double R = 1.0 + margin;
    cplx prev = d.jet(R).d1;
    for (int j = 1; j <= n_grid; ++j) {
        const cplx cur = d.jet(std::polar(R, 2.0 * kPi * j / n_grid)).d1;
        min_abs = std::min(min_abs, std::abs(cur));
        wind += std::arg(cur / prev);
        prev = cur;
    }
    if (min_abs < 1e-12 || std::abs(wind) > kPi)
        input_error("MapDegenerate", "derivative of the Riemann map vanishes near the closed disk");
}

namespace detail {

inline double alvarez_raw(const SmoothDomain& d, int n) {
    double s1 = 0.0, s2 = 0.0;
    for (int j = 0; j < n; ++j) {
        const cplx w = std::polar(1.0, 2.0 * kPi * j / n);
        const auto J = d.jet(w);
        const double phi = std::log(std::abs(J.d1));
        const double dr_phi = (w * J.d2 / J.d1).real();
        s1 += phi * dr_phi;
        s2 += phi;
    }
    const double h = 2.0 * kPi / n;
    return -(s1 * h + 2.0 * s2 * h) / (12.0 * kPi);
}

inline double wz_raw(const SmoothDomain& d, const std::vector<cplx>& V, int n) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
        const cplx w = std::polar(1.0, 2.0 * kPi * j / n);
        const auto J = d.jet(w);
        const double az = std::abs(J.d1);
        const cplx nu = w * J.d1 / az;
        const cplx u = w * J.d2 / J.d1;
        const double k = (1.0 + u).real() / az;
        const cplx r = J.d2 / J.d1;
        const cplx s_zw = J.d3 / J.d1 - 1.5 * r * r;
        const cplx s_wz = -s_zw / (J.d1 * J.d1);
        const cplx term = eval_series(V, w) * std::conj(nu) * ((nu * nu * s_wz).real() - k * k);
        s += term.real() * az;
    }
    return s * (2.0 * kPi / n) / (6.0 * kPi);
}

template <class F>
double grid_checked(F&& f, int n_grid, double tol) {
    if (n_grid < 256 || (n_grid & (n_grid - 1)) != 0)
        input_error("GridTooCoarse", "n_grid must be a power of two >= 256");
    const double fine = f(n_grid);
    const double coarse = f(n_grid / 2);
    if (std::abs(fine - coarse) > tol * std::max(1.0, std::abs(fine)))
        numerical_error("GridTooCoarse", "grid halving changed the result by " + std::to_string(std::abs(fine - coarse)));
    return fine;
}

} // namespace detail

// Up to an additive absolute constant.
inline double alvarez_logdet(const SmoothDomain& d, int n_grid = 512, double tol = 1e-11) {
    return detail::grid_checked([&](int n) { return detail::alvarez_raw(d, n); }, n_grid, tol);
}

inline double wz_variation(const SmoothDomain& d, const std::vector<cplx>& V, int n_grid = 512, double tol = 1e-11) {
    return detail::grid_checked([&](int n) { return detail::wz_raw(d, V, n); }, n_grid, tol);
}

struct WzComparison {
    double formula;
    double fd;
};

inline WzComparison wz_vs_alvarez_fd(const SmoothDomain& d, const std::vector<cplx>& V, double eps, int n_grid = 512) {
    const SmoothDomain plus = perturbed(d, V, eps), minus = perturbed(d, V, -eps);
    check_domain(plus);
    check_domain(minus);
    const double fd = (alvarez_logdet(plus, n_grid) - alvarez_logdet(minus, n_grid)) / (2.0 * eps);
    return {wz_variation(d, V, n_grid), fd};
}

inline double curvature_identity_check(const SmoothDomain& d, int n_grid = 512) {
    double worst = 0.0;
    for (int j = 0; j < n_grid; ++j) {
        const cplx w = std::polar(1.0, 2.0 * kPi * j / n_grid);
        const auto J = d.jet(w);
        const double aw = 1.0 / std::abs(J.d1); // |w'|
        const cplx u = w * J.d2 / J.d1;
        const double k = aw * (1.0 + u).real();
        const cplx r = J.d2 / J.d1;
        const double lhs = 4.0 * k * k / (aw * aw);
        const cplx q = w * w * r * r;
        const double rhs = 4.0 + 2.0 * q.real() + 8.0 * u.real() + 2.0 * std::norm(r);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

} // namespace polydet

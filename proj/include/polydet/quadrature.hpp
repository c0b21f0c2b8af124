#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "errors.hpp"

namespace polydet {

struct Rule {
    std::vector<double> x;
    std::vector<double> w;
    // Offsets of each node from the left and right ends of the full interval.
    // Singular factors should be evaluated from these, not from x - a.
    std::vector<double> da;
    std::vector<double> db;

    std::size_t size() const { return x.size(); }
};

namespace detail {

// Golub-Welsch for the weight (1-x)^a (1+x)^b on [-1,1].
inline Rule golub_welsch_jacobi(int n, double a, double b) {
    if (n < 1) internal_error("QuadratureOrder", "order must be positive");
    if (a <= -1.0 || b <= -1.0) internal_error("QuadratureOrder", "Jacobi exponents must exceed -1");
    Eigen::VectorXd diag(n), sub(n > 1 ? n - 1 : 1);
    const double ab = a + b;
    for (int k = 0; k < n; ++k) {
        if (k == 0) {
            diag(k) = (b - a) / (ab + 2.0);
        } else {
            const double t = 2.0 * k + ab;
            diag(k) = (b * b - a * a) / (t * (t + 2.0));
        }
    }
    for (int k = 1; k < n; ++k) {
        double beta;
        if (k == 1) {
            beta = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
        } else {
            const double t = 2.0 * k + ab;
            beta = 4.0 * k * (k + a) * (k + b) * (k + ab) / (t * t * (t + 1.0) * (t - 1.0));
        }
        sub(k - 1) = std::sqrt(beta);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (n > 1) {
        es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
    }
    const double log_mu0 = (ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                           std::lgamma(ab + 2.0);
    const double mu0 = std::exp(log_mu0);
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    r.da.resize(n);
    r.db.resize(n);
    for (int i = 0; i < n; ++i) {
        if (n == 1) {
            r.x[i] = diag(0);
            r.w[i] = mu0;
        } else {
            r.x[i] = es.eigenvalues()(i);
            const double v0 = es.eigenvectors()(0, i);
            r.w[i] = mu0 * v0 * v0;
        }
        r.da[i] = 1.0 + r.x[i];
        r.db[i] = 1.0 - r.x[i];
    }
    return r;
}

} // namespace detail

// Cached Gauss-Jacobi rule for (1-x)^a (1+x)^b on [-1,1].
inline const Rule& gauss_jacobi(int n, double a, double b) {
    static std::mutex mu;
    static std::map<std::tuple<int, double, double>, Rule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(n, a, b);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, detail::golub_welsch_jacobi(n, a, b)).first;
    return it->second;
}

inline const Rule& gauss_legendre(int n) { return gauss_jacobi(n, 0.0, 0.0); }

template <class F>
double integrate_gl(F&& f, double lo, double hi, int n) {
    const Rule& r = gauss_legendre(n);
    const double h = 0.5 * (hi - lo), m = 0.5 * (hi + lo);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * f(m + h * r.x[i]);
    return s * h;
}

struct PanelOptions {
    int order = 24;
    // A panel is accepted when every foreign singularity lies at least
    // `separation` panel lengths away from it.
    double separation = 0.5;
    int max_depth = 60;
};

namespace detail {

inline double dist_to_interval(std::complex<double> s, double t0, double t1) {
    if (s.real() < t0) return std::abs(s - t0);
    if (s.real() > t1) return std::abs(s - t1);
    return std::abs(s.imag());
}

inline void split_panels(double t0, double t1, bool own_left, bool own_right, double a, double b,
                         double ea, double eb, const std::vector<std::complex<double>>& sing,
                         const PanelOptions& opt, int depth,
                         std::vector<std::tuple<double, double, bool, bool>>& out) {
    const double len = t1 - t0;
    double dmin = INFINITY;
    for (const auto& s : sing) dmin = std::min(dmin, dist_to_interval(s, t0, t1));
    if (ea != 0.0 && !own_left) dmin = std::min(dmin, t0 - a);
    if (eb != 0.0 && !own_right) dmin = std::min(dmin, b - t1);
    if (dmin >= opt.separation * len || depth >= opt.max_depth) {
        out.emplace_back(t0, t1, own_left, own_right);
        return;
    }
    const double m = 0.5 * (t0 + t1);
    split_panels(t0, m, own_left, false, a, b, ea, eb, sing, opt, depth + 1, out);
    split_panels(m, t1, false, own_right, a, b, ea, eb, sing, opt, depth + 1, out);
}

} // namespace detail

// Compound rule for the integral over [a,b] of f(t) = (t-a)^ea (b-t)^eb g(t),
// g analytic away from the points in `sing`.  The returned weights apply to f itself.
inline Rule compound_rule(double a, double b, double ea, double eb,
                          const std::vector<std::complex<double>>& sing, const PanelOptions& opt = {}) {
    std::vector<std::tuple<double, double, bool, bool>> panels;
    detail::split_panels(a, b, true, true, a, b, ea, eb, sing, opt, 0, panels);
    Rule out;
    for (const auto& [t0, t1, own_l, own_r] : panels) {
        const double el = own_l ? ea : 0.0;
        const double er = own_r ? eb : 0.0;
        const Rule& r = gauss_jacobi(opt.order, er, el);
        const double h = 0.5 * (t1 - t0);
        const double scale = std::pow(h, 1.0 + el + er);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double off_l = h * r.da[i];
            const double off_r = h * r.db[i];
            double w = r.w[i] * scale;
            if (el != 0.0) w /= std::pow(off_l, el);
            if (er != 0.0) w /= std::pow(off_r, er);
            out.x.push_back(t0 + off_l);
            out.w.push_back(w);
            out.da.push_back((t0 - a) + off_l);
            out.db.push_back((b - t1) + off_r);
        }
    }
    return out;
}

} // namespace polydet

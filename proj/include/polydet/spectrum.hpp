#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "geometry.hpp"

namespace polydet {

struct CountCheck {
    double lambda = 0.0;      // where the count was taken
    int count = 0;            // eigenvalues found below lambda
    double weyl = 0.0;        // |P| lambda/4pi - |dP| sqrt(lambda)/4pi + beta1
    double deviation = 0.0;   // count - weyl
    double bound = 0.0;
    double mean_deviation = 0.0; // count - weyl averaged over [lambda/2, lambda]
    double mean_bound = 0.75;
    bool ok = true;
};

struct Spectrum {
    std::vector<double> eigenvalues; // ascending
    std::vector<double> errors;      // per-eigenvalue error estimate
    double lambda_max = 0.0;
    CountCheck count_check;

    std::size_t size() const { return eigenvalues.size(); }
};

inline double corner_beta1(const Polygon& p) {
    double s = 0.0;
    for (double a : p.angles) s += (kPi * kPi - a * a) / (24.0 * kPi * a);
    return s;
}

inline double weyl_count(double area, double perimeter, double beta1, double lambda) {
    return area * lambda / (4.0 * kPi) - perimeter * std::sqrt(lambda) / (4.0 * kPi) + beta1;
}

inline CountCheck weyl_check(const Polygon& p, const std::vector<double>& eigs, double lambda, double c_w) {
    CountCheck c;
    c.lambda = lambda;
    c.count = static_cast<int>(std::lower_bound(eigs.begin(), eigs.end(), lambda) - eigs.begin());
    c.weyl = weyl_count(p.area, p.perimeter, corner_beta1(p), lambda);
    c.deviation = c.count - c.weyl;
    c.bound = c_w + 3.0;
    // the pointwise count swings by a few units; its average over the top half does not,
    // and drops by one for every eigenvalue lost below lambda/2
    const double b1 = corner_beta1(p);
    const int n = 256;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double l = lambda * (0.5 + 0.5 * (i + 0.5) / n);
        const auto below = std::lower_bound(eigs.begin(), eigs.end(), l) - eigs.begin();
        sum += static_cast<double>(below) - weyl_count(p.area, p.perimeter, b1, l);
    }
    c.mean_deviation = sum / n;
    c.ok = std::abs(c.deviation) <= c.bound && std::abs(c.mean_deviation) <= c.mean_bound;
    return c;
}

inline Spectrum rectangle_spectrum(double a, double b, double lambda_max) {
    Spectrum s;
    s.lambda_max = lambda_max;
    const double pi2 = kPi * kPi;
    for (int m = 1; pi2 * m * m / (a * a) < lambda_max; ++m)
        for (int n = 1;; ++n) {
            const double lam = pi2 * (m * m / (a * a) + n * n / (b * b));
            if (lam >= lambda_max) break;
            s.eigenvalues.push_back(lam);
        }
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
    s.errors.assign(s.eigenvalues.size(), 0.0);
    const Polygon p = build_polygon({{0, 0}, {a, 0}, {a, b}, {0, b}});
    s.count_check = weyl_check(p, s.eigenvalues, lambda_max, 2.0);
    return s;
}

} // namespace polydet

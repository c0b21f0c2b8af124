#pragma once

#include <algorithm>
#include <random>

#include "geometry.hpp"

namespace polydet::samples {

inline Polygon unit_square() { return build_polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

inline Polygon rectangle(double a, double b) { return build_polygon({{0, 0}, {a, 0}, {a, b}, {0, b}}); }

inline Polygon right_isosceles() { return build_polygon({{0, 0}, {1, 0}, {0, 1}}); }

inline Polygon regular(int n, double side = 1.0) {
    const double R = side / (2.0 * std::sin(kPi / n));
    std::vector<cplx> v;
    for (int k = 0; k < n; ++k) v.push_back(std::polar(R, 2 * kPi * k / n));
    return build_polygon(v);
}

// Vertices at random angles on an annulus; throws for badly shaped draws.
inline Polygon random_convex(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> th(n);
    for (auto& t : th) t = 2 * kPi * U(rng);
    std::sort(th.begin(), th.end());
    std::vector<cplx> v;
    for (double t : th) v.push_back(std::polar(0.6 + 0.4 * U(rng), t));
    Polygon p = build_polygon(v);
    for (double L : p.side_lengths)
        if (L < 0.25) input_error("Reject", "short side");
    for (double a : p.angles)
        if (a > 0.9 * kPi) input_error("Reject", "flat angle");
    return p;
}

// count random polygons with sizes cycling through 3..8.
inline std::vector<Polygon> random_convex_suite(std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed);
    std::vector<Polygon> out;
    while (static_cast<int>(out.size()) < count) {
        try {
            out.push_back(random_convex(rng, 3 + static_cast<int>(out.size()) % 6));
        } catch (const Error&) {
        }
    }
    return out;
}

// The fixed 20-polygon regression suite.
inline const std::vector<Polygon>& regression_suite() {
    static const std::vector<Polygon> s = random_convex_suite(2024, 20);
    return s;
}

} // namespace polydet::samples

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace polydet {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

struct Polygon {
    std::vector<cplx> vertices;
    std::vector<double> angles;       // interior angle at each vertex
    std::vector<double> side_lengths; // side j runs from vertex j to vertex j+1
    double area = 0.0;
    double perimeter = 0.0;

    std::size_t size() const { return vertices.size(); }
    const cplx& vertex(std::size_t i) const { return vertices[i % vertices.size()]; }
    cplx tangent(std::size_t j) const {
        const cplx d = vertex(j + 1) - vertex(j);
        return d / std::abs(d);
    }
    // Outward normal as a complex number, -i times the unit tangent.
    cplx normal(std::size_t j) const { return cplx(0.0, -1.0) * tangent(j); }
};

struct BuildOptions {
    bool auto_reverse = false;
    bool allow_nonconvex = false;
    double collinear_tol = 1e-10;
};

inline double signed_area(const std::vector<cplx>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const cplx& a = v[i];
        const cplx& b = v[(i + 1) % v.size()];
        s += a.real() * b.imag() - b.real() * a.imag();
    }
    return 0.5 * s;
}

inline Polygon build_polygon(std::vector<cplx> v, const BuildOptions& opt = {}) {
    const std::size_t n = v.size();
    if (n < 3) input_error("DegenerateVertex", "a polygon needs at least 3 vertices");
    for (const auto& p : v)
        if (!std::isfinite(p.real()) || !std::isfinite(p.imag()))
            input_error("DegenerateVertex", "non-finite vertex coordinate");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (v[i] == v[j]) input_error("DegenerateVertex", "repeated vertex " + std::to_string(i));

    if (signed_area(v) < 0.0) {
        if (!opt.auto_reverse) input_error("ClockwiseInput", "vertices are in clockwise order");
        std::reverse(v.begin(), v.end());
    }

    Polygon p;
    p.vertices = v;
    p.angles.resize(n);
    p.side_lengths.resize(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p.side_lengths[i] = std::abs(v[(i + 1) % n] - v[i]);
        scale = std::max(scale, p.side_lengths[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const cplx in = v[i] - v[(i + n - 1) % n];
        const cplx out = v[(i + 1) % n] - v[i];
        const double cross = in.real() * out.imag() - in.imag() * out.real();
        if (std::abs(cross) <= opt.collinear_tol * std::abs(in) * std::abs(out))
            input_error("DegenerateVertex", "collinear vertices at index " + std::to_string(i));
        const double turn = std::arg(out / in);
        p.angles[i] = kPi - turn;
        if (p.angles[i] >= kPi && !opt.allow_nonconvex)
            input_error("NonConvex", "reflex angle at vertex " + std::to_string(i));
    }
    double turning = 0.0;
    for (double a : p.angles) turning += kPi - a;
    if (std::abs(turning - 2.0 * kPi) > 1e-9)
        input_error("NonConvex", "boundary is not simple (total turning " + std::to_string(turning) + ")");

    p.area = signed_area(v);
    p.perimeter = 0.0;
    for (double L : p.side_lengths) p.perimeter += L;
    return p;
}

inline double point_segment_distance(cplx x, cplx a, cplx b) {
    const cplx d = b - a;
    const double t = std::clamp(((x - a) * std::conj(d)).real() / std::norm(d), 0.0, 1.0);
    return std::abs(x - (a + t * d));
}

// Moves every vertex by t * velocity and rebuilds.
inline Polygon moved_polygon(const Polygon& p, const std::vector<cplx>& vel, double t) {
    std::vector<cplx> v(p.vertices);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += t * vel[i];
    return build_polygon(v);
}

struct DeformationField {
    std::vector<cplx> vertex_velocities;
    // (A.nu)(s) = c0[j] + c1[j]*s on side j, s measured from vertex j.
    std::vector<double> c0;
    std::vector<double> c1;
    std::vector<double> delta_angles;
    double delta_area = 0.0;
    double delta_perimeter = 0.0;

    double normal_velocity(std::size_t j, double s) const { return c0[j] + c1[j] * s; }
};

inline cplx complexified_normal(const Polygon& p, std::size_t side, double /*s*/) { return p.normal(side); }

inline double area_variation(const Polygon& p, const DeformationField& f) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double L = p.side_lengths[j];
        s += f.c0[j] * L + 0.5 * f.c1[j] * L * L;
    }
    return s;
}

inline double perimeter_variation(const Polygon& p, const DeformationField& f) {
    double s = 0.0;
    const std::size_t n = p.size();
    for (std::size_t j = 0; j < n; ++j) {
        const cplx dv = f.vertex_velocities[(j + 1) % n] - f.vertex_velocities[j];
        s += (std::conj(p.tangent(j)) * dv).real();
    }
    return s;
}

inline DeformationField field_from_vertex_velocities(const Polygon& p, const std::vector<cplx>& v) {
    const std::size_t n = p.size();
    if (v.size() != n) input_error("FieldSize", "expected " + std::to_string(n) + " vertex velocities");
    DeformationField f;
    f.vertex_velocities = v;
    f.c0.resize(n);
    f.c1.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const cplx nu = p.normal(j);
        const double start = (std::conj(nu) * v[j]).real();
        const double end = (std::conj(nu) * v[(j + 1) % n]).real();
        f.c0[j] = start;
        f.c1[j] = (end - start) / p.side_lengths[j];
    }
    // A side with normal speed growing along it turns clockwise at rate c1,
    // so the angle at vertex i changes by c1[i] - c1[i-1].
    f.delta_angles.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.delta_angles[i] = f.c1[i] - f.c1[(i + n - 1) % n];
    f.delta_area = area_variation(p, f);
    f.delta_perimeter = perimeter_variation(p, f);
    return f;
}

// Standard fields.
inline std::vector<cplx> translation_velocities(const Polygon& p, cplx c) {
    return std::vector<cplx>(p.size(), c);
}

inline std::vector<cplx> rotation_velocities(const Polygon& p, cplx center = 0.0) {
    std::vector<cplx> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = cplx(0.0, 1.0) * (p.vertices[i] - center);
    return v;
}

inline std::vector<cplx> dilation_velocities(const Polygon& p, cplx center = 0.0) {
    std::vector<cplx> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = p.vertices[i] - center;
    return v;
}

// Unit-speed outward parallel shift of side j; the adjacent sides keep their lines.
inline std::vector<cplx> side_shift_velocities(const Polygon& p, std::size_t j) {
    const std::size_t n = p.size();
    std::vector<cplx> v(n, 0.0);
    const cplx nu = p.normal(j);
    const cplx d_prev = -p.tangent((j + n - 1) % n); // from vertex j back along side j-1
    const cplx d_next = p.tangent((j + 1) % n);      // from vertex j+1 along side j+1
    v[j] = d_prev / (std::conj(nu) * d_prev).real();
    v[(j + 1) % n] = d_next / (std::conj(nu) * d_next).real();
    return v;
}

} // namespace polydet

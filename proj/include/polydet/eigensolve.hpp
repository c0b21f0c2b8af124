#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/bessel_prime.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "quadrature.hpp"
#include "spectrum.hpp"

namespace polydet {

struct MPSConfig {
    // Orders run up to factor * kR + extra * (kR)^(1/3) + 3, R the expansion's reach;
    // J_nu(kR) decays past nu = kR on the (kR)^(1/3) scale. Factor and extra are 1 and
    // basis_extra for the interior expansion, basis_factor and corner_extra for corner fans.
    double basis_factor = 0.5;
    double basis_extra = 6.0;
    double corner_extra = 3.0;
    double points_per_wavelength = 8.0;
    double boundary_oversample = 2.0; // boundary points per basis function
    double interior_ratio = 1.0;      // interior points per basis function
    bool interior_expansion = true; // integer-order expansion about the centroid for the smooth part
    double rank_tol = 1e-14;          // pivoted-QR column truncation
    double sweep_fraction = 0.05;     // grid step as a fraction of the mean k-spacing
    double accept_tol = 1e-6;         // largest sigma accepted as an eigenvalue
    double mult_tol = 1e-7;           // sigma_i below this at a minimum counts towards the multiplicity
    double weyl_cw = 2.0;
    double gap_tol = 1e-6;            // relative gap below which an eigenvalue counts as degenerate
    double cond_limit = 1e-6;         // eps * coefficient growth allowed in eigenfunction values
    int quad_order = 20;
    int quad_levels = 3;
    int threads = 1;
    unsigned seed = 20240601;
};

namespace detail {

// J_0..J_n at x by backward recurrence, normalized with J_0 + 2 sum J_2k = 1.
inline void bessel_j_sequence(int n, double x, double* out) {
    if (x < 1.0) {
        for (int m = 0; m <= n; ++m) out[m] = boost::math::cyl_bessel_j(m, x);
        return;
    }
    const int top = std::max(n, static_cast<int>(x));
    int start = top + 16 + static_cast<int>(std::sqrt(40.0 * top));
    start += start % 2;
    double bp = 0.0, b = 1e-300, sum = 0.0;
    for (int m = start; m > 0; --m) {
        const double bm = 2.0 * m / x * b - bp;
        bp = b;
        b = bm; // b_{m-1}
        if (m - 1 <= n) out[m - 1] = b;
        if ((m - 1) % 2 == 0 && m - 1 > 0) sum += 2.0 * b;
        if (std::abs(b) > 1e250) {
            b *= 1e-250;
            bp *= 1e-250;
            sum *= 1e-250;
            for (int j = m - 1; j <= n; ++j) out[j] *= 1e-250;
        }
    }
    sum += b;
    for (int j = 0; j <= n; ++j) out[j] /= sum;
}

// A corner fan J_{m pi/alpha}(kr) sin(m pi theta/alpha), theta from the outgoing side, or the
// interior expansion J_n(kr) {cos, sin}(n theta) about a centre.
struct Fan {
    cplx apex;
    cplx dir = 1.0;
    double alpha = 0.0;
    double reach = 0.0;
    bool interior = false;

    double step() const { return interior ? 1.0 : kPi / alpha; }
    bool integer_orders() const {
        const double s = step();
        return std::abs(s - std::round(s)) < 1e-12;
    }
};

inline std::vector<Fan> polygon_fans(const Polygon& p, bool interior) {
    std::vector<Fan> fans(p.size());
    cplx c = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        Fan& f = fans[i];
        f.apex = p.vertices[i];
        f.dir = p.tangent(i);
        f.alpha = p.angles[i];
        for (const cplx& v : p.vertices) f.reach = std::max(f.reach, std::abs(v - f.apex));
        c += p.vertices[i];
    }
    if (interior) {
        Fan f;
        f.apex = c / static_cast<double>(p.size());
        f.alpha = 2.0 * kPi;
        f.interior = true;
        for (const cplx& v : p.vertices) f.reach = std::max(f.reach, std::abs(v - f.apex));
        fans.push_back(f);
    }
    return fans;
}

struct Column {
    std::size_t fan;
    int m;          // order index: nu = m * step
    bool cosine;
};

inline int fan_terms(const Fan& f, double k, const MPSConfig& cfg) {
    const double kr = k * f.reach;
    const double factor = f.interior ? 1.0 : cfg.basis_factor;
    const double extra = f.interior ? cfg.basis_extra : cfg.corner_extra;
    const double top = factor * kr + extra * std::cbrt(kr) + 3.0;
    return std::max(f.interior ? 0 : 1, static_cast<int>(top / f.step()));
}

inline std::vector<Column> basis_columns(const std::vector<Fan>& fans, double k, const MPSConfig& cfg) {
    std::vector<Column> cols;
    for (std::size_t i = 0; i < fans.size(); ++i) {
        // a corner with pi/alpha an integer is regular; the interior expansion covers it
        if (cfg.interior_expansion && !fans[i].interior && fans[i].integer_orders()) continue;
        const int n = fan_terms(fans[i], k, cfg);
        if (fans[i].interior) {
            for (int m = 0; m <= n; ++m) {
                cols.push_back({i, m, true});
                if (m > 0) cols.push_back({i, m, false});
            }
        } else {
            for (int m = 1; m <= n; ++m) cols.push_back({i, m, false});
        }
    }
    return cols;
}

// Bessel values J_{m step}(kr) for m = 0..n (index m), plus n+1 for derivatives.
inline void fan_bessel(const Fan& f, int n, double kr, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(n) + 2, 0.0);
    if (f.integer_orders()) {
        const int s = static_cast<int>(std::round(f.step()));
        std::vector<double> seq(static_cast<std::size_t>(s * (n + 1)) + 2);
        bessel_j_sequence(s * (n + 1) + 1, kr, seq.data());
        for (int m = 0; m <= n + 1; ++m) out[static_cast<std::size_t>(m)] = seq[static_cast<std::size_t>(m * s)];
    } else {
        for (int m = 0; m <= n + 1; ++m) out[static_cast<std::size_t>(m)] = boost::math::cyl_bessel_j(m * f.step(), kr);
    }
}

// Local polar coordinates of x about a fan.
inline void fan_polar(const Fan& f, cplx x, double& r, double& th) {
    const cplx w = (x - f.apex) / f.dir;
    r = std::abs(w);
    th = r == 0.0 ? 0.0 : std::arg(w);
}

// Values of all columns at the points; column j of the result belongs to cols[j].
inline Eigen::MatrixXd basis_matrix(const std::vector<Fan>& fans, const std::vector<Column>& cols, double k,
                                    const std::vector<cplx>& pts) {
    Eigen::MatrixXd A(pts.size(), cols.size());
    std::vector<int> terms(fans.size(), -1);
    for (const auto& c : cols) terms[c.fan] = std::max(terms[c.fan], c.m);
    std::vector<std::vector<double>> J(fans.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<double> r(fans.size()), th(fans.size());
        for (std::size_t f = 0; f < fans.size(); ++f) {
            if (terms[f] < 0) continue;
            fan_polar(fans[f], pts[i], r[f], th[f]);
            fan_bessel(fans[f], terms[f], k * r[f], J[f]);
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const Column& col = cols[c];
            const double nu = col.m * fans[col.fan].step();
            const double ang = col.cosine ? std::cos(nu * th[col.fan]) : std::sin(nu * th[col.fan]);
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = J[col.fan][static_cast<std::size_t>(col.m)] * ang;
        }
    }
    return A;
}

// Gradients u_x + i u_y of all columns at one point.
inline std::vector<cplx> basis_gradients(const std::vector<Fan>& fans, const std::vector<Column>& cols, double k,
                                         cplx x) {
    std::vector<cplx> g(cols.size(), 0.0);
    std::vector<int> terms(fans.size(), -1);
    for (const auto& c : cols) terms[c.fan] = std::max(terms[c.fan], c.m);
    std::vector<std::vector<double>> J(fans.size()), dJ(fans.size());
    std::vector<double> r(fans.size()), th(fans.size());
    for (std::size_t f = 0; f < fans.size(); ++f) {
        if (terms[f] < 0) continue;
        fan_polar(fans[f], x, r[f], th[f]);
        const double kr = k * r[f];
        const std::size_t n = static_cast<std::size_t>(terms[f]);
        J[f].assign(n + 1, 0.0);
        dJ[f].assign(n + 1, 0.0);
        if (r[f] == 0.0) continue;
        if (fans[f].interior) {
            std::vector<double> seq(n + 2);
            bessel_j_sequence(static_cast<int>(n) + 1, kr, seq.data());
            for (std::size_t m = 0; m <= n; ++m) {
                J[f][m] = seq[m];
                dJ[f][m] = m == 0 ? -seq[1] : 0.5 * (seq[m - 1] - seq[m + 1]);
            }
        } else {
            for (std::size_t m = 1; m <= n; ++m) {
                const double nu = static_cast<double>(m) * fans[f].step();
                J[f][m] = boost::math::cyl_bessel_j(nu, kr);
                dJ[f][m] = boost::math::cyl_bessel_j_prime(nu, kr);
            }
        }
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const Column& col = cols[c];
        const Fan& f = fans[col.fan];
        const std::size_t m = static_cast<std::size_t>(col.m);
        const double nu = col.m * f.step(), rr = r[col.fan], t = th[col.fan];
        if (rr == 0.0) {
            // only the first-order interior terms have a nonzero gradient at the centre
            if (f.interior && col.m == 1) g[c] = 0.5 * k * (col.cosine ? cplx(1.0, 0.0) : cplx(0.0, 1.0));
            continue;
        }
        const double ang = col.cosine ? std::cos(nu * t) : std::sin(nu * t);
        const double dang = col.cosine ? -std::sin(nu * t) : std::cos(nu * t);
        g[c] = f.dir * std::polar(1.0, t) * cplx(k * dJ[col.fan][m] * ang, nu * J[col.fan][m] / rr * dang);
    }
    return g;
}

inline bool inside(const Polygon& p, cplx x) {
    for (std::size_t j = 0; j < p.size(); ++j)
        if ((std::conj(p.tangent(j)) * (x - p.vertex(j))).imag() <= 0.0) return false;
    return true;
}

// Gauss-Legendre nodes on each side, clustering at the vertices.
inline std::vector<cplx> boundary_points(const Polygon& p, double k, std::size_t ncols, const MPSConfig& cfg) {
    std::vector<cplx> pts;
    const double need = cfg.boundary_oversample * static_cast<double>(ncols);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double L = p.side_lengths[j];
        const int n = std::max({8, static_cast<int>(std::ceil(cfg.points_per_wavelength * k * L / (2.0 * kPi))),
                                static_cast<int>(std::ceil(need * L / p.perimeter))});
        const Rule& r = gauss_legendre(n);
        for (std::size_t i = 0; i < r.size(); ++i) pts.push_back(p.vertex(j) + 0.5 * L * r.da[i] * p.tangent(j));
    }
    return pts;
}

inline std::vector<cplx> interior_pool(const Polygon& p, std::size_t count, unsigned seed) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const cplx& v : p.vertices) {
        x0 = std::min(x0, v.real());
        x1 = std::max(x1, v.real());
        y0 = std::min(y0, v.imag());
        y1 = std::max(y1, v.imag());
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
    std::vector<cplx> pts;
    while (pts.size() < count) {
        const cplx x(ux(rng), uy(rng));
        if (inside(p, x)) pts.push_back(x);
    }
    return pts;
}

// QR of [A_B; A_I] with column pivoting and truncation, then the SVD of the boundary block of Q.
struct SubspaceProblem {
    Eigen::MatrixXd R;           // rank x rank
    Eigen::VectorXi perm;        // column order used by R
    Eigen::VectorXd col_scale;   // columns were divided by these before the QR
    Eigen::VectorXd sigma;       // ascending singular values of Q_B
    Eigen::MatrixXd V;           // right singular vectors, same order as sigma
    std::size_t rank = 0;
    std::size_t rows = 0;
    double cond = 0.0;
};

inline SubspaceProblem subspace_problem(const Polygon& p, const std::vector<Fan>& fans, double k,
                                        const std::vector<cplx>& pool, const MPSConfig& cfg, bool vectors) {
    const auto cols = basis_columns(fans, k, cfg);
    const std::size_t N = cols.size();
    const auto bpts = boundary_points(p, k, N, cfg);
    const std::size_t ni = std::min(pool.size(), static_cast<std::size_t>(std::ceil(cfg.interior_ratio * N)) + 8);
    std::vector<cplx> all = bpts;
    all.insert(all.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(ni));
    Eigen::MatrixXd A = basis_matrix(fans, cols, k, all);
    SubspaceProblem sp;
    sp.col_scale.resize(static_cast<Eigen::Index>(N));
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
        const double s = A.col(c).norm();
        sp.col_scale(c) = s > 0.0 ? s : 1.0;
        A.col(c) /= sp.col_scale(c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::MatrixXd& QR = qr.matrixQR();
    const double r00 = std::abs(QR(0, 0));
    std::size_t rank = 0;
    while (rank < N && std::abs(QR(rank, rank)) > cfg.rank_tol * r00) ++rank;
    sp.rank = rank;
    sp.rows = static_cast<std::size_t>(A.rows());
    sp.cond = rank ? r00 / std::abs(QR(rank - 1, rank - 1)) : INFINITY;
    const Eigen::Index M = A.rows(), r = static_cast<Eigen::Index>(rank);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
    const Eigen::MatrixXd QB = Q.topRows(static_cast<Eigen::Index>(bpts.size()));
    Eigen::BDCSVD<Eigen::MatrixXd> svd(QB, vectors ? Eigen::ComputeThinV : 0);
    const Eigen::VectorXd s = svd.singularValues();
    sp.sigma = s.reverse();
    if (vectors) {
        sp.V = svd.matrixV().rowwise().reverse();
        sp.R = QR.topLeftCorner(r, r).triangularView<Eigen::Upper>();
        sp.perm = qr.colsPermutation().indices();
    }
    return sp;
}

inline double faber_krahn_k(const Polygon& p) { return 2.404825557695773 * std::sqrt(kPi / p.area); }

} // namespace detail

// Smallest singular values of the boundary block at wavenumber k = sqrt(lambda).
inline std::vector<double> mps_sigma(const Polygon& p, double lambda, const MPSConfig& cfg = {}, std::size_t count = 3) {
    if (!(lambda > 0.0)) input_error("BadLambda", "lambda must be positive");
    const auto fans = detail::polygon_fans(p, cfg.interior_expansion);
    const double k = std::sqrt(lambda);
    const auto pool = detail::interior_pool(p, 4096, cfg.seed);
    const auto sp = detail::subspace_problem(p, fans, k, pool, cfg, false);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < sp.sigma.size() && out.size() < count; ++i) out.push_back(sp.sigma(i));
    return out;
}

// Eigenfunction as a combination of corner fans, L2-normalized on the polygon.
struct Eigenfunction {
    double lambda = 0.0;
    std::vector<detail::Fan> fans;
    std::vector<detail::Column> cols;
    std::vector<double> coef;
    double coefficient_growth = 0.0; // sum |coefficient| * |column| over max |u|

    double k() const { return std::sqrt(lambda); }
    double value(cplx x) const { return values({x})[0]; }
    std::vector<double> values(const std::vector<cplx>& xs) const {
        const Eigen::MatrixXd A = detail::basis_matrix(fans, cols, k(), xs);
        const Eigen::VectorXd v = A * Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
        return {v.data(), v.data() + v.size()};
    }
    cplx gradient(cplx x) const {
        const auto g = detail::basis_gradients(fans, cols, k(), x);
        cplx s = 0.0;
        for (std::size_t c = 0; c < cols.size(); ++c) s += coef[c] * g[c];
        return s;
    }
};

namespace detail {

// Geometric panels towards the ends of [0, L] (levels_a at 0, levels_b at L); the end
// panels carry the Jacobi weights t^ea and (L - t)^eb.
inline Rule graded_rule(double L, double ea, double eb, int order, int levels_a, int levels_b, double ratio = 0.15) {
    Rule out;
    auto panel = [&](double t0, double t1, double el, double er) {
        const Rule& r = gauss_jacobi(order, er, el);
        const double h = 0.5 * (t1 - t0);
        const double scale = std::pow(h, 1.0 + el + er);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double off_l = h * r.da[i], off_r = h * r.db[i];
            double w = r.w[i] * scale;
            if (el != 0.0) w /= std::pow(off_l, el);
            if (er != 0.0) w /= std::pow(off_r, er);
            out.x.push_back(t0 + off_l);
            out.w.push_back(w);
            out.da.push_back(t0 + off_l);
            out.db.push_back(L - t0 - off_l);
        }
    };
    // breakpoints 0 < h r^levels < ... < h r < h on each half
    auto ladder = [&](int levels) {
        std::vector<double> b{0.0};
        for (int l = levels; l >= 1; --l) b.push_back(0.5 * L * std::pow(ratio, l));
        b.push_back(0.5 * L);
        return b;
    };
    const auto left = ladder(levels_a), right = ladder(levels_b);
    for (std::size_t i = 0; i + 1 < left.size(); ++i) panel(left[i], left[i + 1], i == 0 ? ea : 0.0, 0.0);
    for (std::size_t i = right.size() - 1; i > 0; --i) panel(L - right[i], L - right[i - 1], 0.0, i == 1 ? eb : 0.0);
    return out;
}

// Fan triangles from the centroid, graded towards the polygon vertices.
struct AreaRule {
    std::vector<cplx> x;
    std::vector<double> w;
};

inline AreaRule polygon_area_rule(const Polygon& p, int order, int levels) {
    cplx c = 0.0;
    for (const cplx& v : p.vertices) c += v;
    c /= static_cast<double>(p.size());
    AreaRule out;
    const Rule ru = graded_rule(1.0, 0.0, 0.0, order, 0, levels);
    const Rule rw = graded_rule(1.0, 0.0, 0.0, order, levels, levels);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const cplx a = p.vertex(j) - c, b = p.vertex(j + 1) - c;
        const double jac = (std::conj(a) * b).imag();
        for (std::size_t i = 0; i < ru.size(); ++i)
            for (std::size_t m = 0; m < rw.size(); ++m) {
                const double u = ru.x[i], w = rw.x[m];
                out.x.push_back(c + u * ((1.0 - w) * a + w * b));
                out.w.push_back(ru.w[i] * rw.w[m] * u * jac);
            }
    }
    return out;
}

} // namespace detail

// Eigenfunctions at an eigenvalue of the given multiplicity, orthonormal in L2.
inline std::vector<Eigenfunction> mps_eigenfunctions(const Polygon& p, double lambda, std::size_t multiplicity,
                                                     const MPSConfig& cfg = {}) {
    const auto fans = detail::polygon_fans(p, cfg.interior_expansion);
    const double k = std::sqrt(lambda);
    const auto pool = detail::interior_pool(p, 4096, cfg.seed);
    const auto sp = detail::subspace_problem(p, fans, k, pool, cfg, true);
    const auto cols = detail::basis_columns(fans, k, cfg);
    const Eigen::Index r = static_cast<Eigen::Index>(sp.rank);
    if (multiplicity == 0 || static_cast<Eigen::Index>(multiplicity) > r)
        input_error("BadMultiplicity", "multiplicity must be between 1 and the basis rank");
    const detail::AreaRule quad = detail::polygon_area_rule(p, cfg.quad_order, cfg.quad_levels);

    std::vector<Eigenfunction> raw;
    std::vector<std::vector<double>> vals;
    for (std::size_t m = 0; m < multiplicity; ++m) {
        const Eigen::VectorXd y = sp.R.triangularView<Eigen::Upper>().solve(sp.V.col(static_cast<Eigen::Index>(m)));
        Eigenfunction e;
        e.lambda = lambda;
        e.fans = fans;
        e.cols = cols;
        e.coef.assign(cols.size(), 0.0);
        double growth = 0.0;
        for (Eigen::Index i = 0; i < r; ++i) {
            const Eigen::Index c = sp.perm(i);
            e.coef[static_cast<std::size_t>(c)] = y(i) / sp.col_scale(c);
            growth += std::abs(y(i));
        }
        std::vector<double> v = e.values(quad.x);
        double vmax = 0.0;
        for (double x : v) vmax = std::max(vmax, std::abs(x));
        // scaled columns have entries of size ~ rows^(-1/2); growth measures the cancellation in u
        e.coefficient_growth = growth / std::max(vmax * std::sqrt(static_cast<double>(sp.rows)), 1e-300);
        if (e.coefficient_growth * 2.2e-16 > cfg.cond_limit)
            numerical_error("BasisIllConditioned", "coefficient growth " + std::to_string(e.coefficient_growth) +
                                                       " at lambda " + std::to_string(lambda) +
                                                       "; increase collocation or reduce basis_factor");
        raw.push_back(std::move(e));
        vals.push_back(std::move(v));
    }
    // Gram matrix in L2 and symmetric orthonormalization
    const Eigen::Index n = static_cast<Eigen::Index>(multiplicity);
    Eigen::MatrixXd G(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b <= a; ++b) {
            double s = 0.0;
            for (std::size_t q = 0; q < quad.w.size(); ++q) s += quad.w[q] * vals[a][q] * vals[b][q];
            G(a, b) = G(b, a) = s;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::MatrixXd T =
        es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    std::vector<Eigenfunction> out;
    for (Eigen::Index a = 0; a < n; ++a) {
        Eigenfunction e = raw[static_cast<std::size_t>(a)];
        std::fill(e.coef.begin(), e.coef.end(), 0.0);
        for (Eigen::Index b = 0; b < n; ++b)
            for (std::size_t c = 0; c < e.coef.size(); ++c) e.coef[c] += T(b, a) * raw[static_cast<std::size_t>(b)].coef[c];
        out.push_back(std::move(e));
    }
    return out;
}

inline double l2_norm_squared(const Polygon& p, const Eigenfunction& u, int order = 20, int levels = 3) {
    const auto quad = detail::polygon_area_rule(p, order, levels);
    const std::vector<double> v = u.values(quad.x);
    double s = 0.0;
    for (std::size_t q = 0; q < quad.w.size(); ++q) s += quad.w[q] * v[q] * v[q];
    return s;
}

// int over the boundary of (d_nu u)^2 g(side, s); g is polynomial on each side.
template <class G>
double boundary_flux_integral(const Polygon& p, const Eigenfunction& u, G&& g, int order = 20, int levels = 3) {
    double total = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double L = p.side_lengths[j];
        const double ea = 2.0 * kPi / p.angles[j] - 2.0;
        const double eb = 2.0 * kPi / p.angles[(j + 1) % p.size()] - 2.0;
        const Rule r = detail::graded_rule(L, ea, eb, order, levels, levels);
        const cplx t = p.tangent(j), nu = p.normal(j);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double dn = (std::conj(nu) * u.gradient(p.vertex(j) + r.x[i] * t)).real();
            total += r.w[i] * dn * dn * g(j, r.x[i]);
        }
    }
    return total;
}

namespace detail {

struct Found {
    double k;
    double sigma;
    std::size_t mult;
};

// Zero of sigma_1 inside the bracket a < c < b, sigma(c) smallest. Near a simple or
// exactly repeated eigenvalue sigma_1 ~ s|k - k0|; the steeper of the two secants
// through c lies on one side of k0 and predicts it.
inline std::pair<double, double> refine_minimum(const Polygon& p, const std::vector<Fan>& fans,
                                                const std::vector<cplx>& pool, double a, double c, double b,
                                                const MPSConfig& cfg, const double* known = nullptr) {
    auto f = [&](double x) { return subspace_problem(p, fans, x, pool, cfg, false).sigma(0); };
    double fa = known ? known[0] : f(a), fc = known ? known[1] : f(c), fb = known ? known[2] : f(b);
    const double tol = 1e-12 * c;
    // at the noise floor new points stop improving on c; above it an overshoot is not a stall
    const double floor = 1e-2 * cfg.accept_tol;
    int stall = 0;
    for (int it = 0; it < 60 && b - a > tol && stall < 3; ++it) {
        const double sl = (fa - fc) / (c - a), sr = (fb - fc) / (b - c);
        double x = sl >= sr ? c + fc / sl : c - fc / sr;
        if (!(x > a && x < b) || !std::isfinite(x)) x = fa < fb ? 0.5 * (a + c) : 0.5 * (c + b);
        if (std::abs(x - c) < tol) break;
        const double fx = f(x);
        stall = fx > 0.5 * fc && fc < floor ? stall + 1 : 0;
        // curvature of sigma across an uneven bracket can put the zero on the other side of c
        const double xm = 2.0 * c - x;
        const bool mirror = fx > 0.5 * fc && fc >= floor && xm > a && xm < b;
        const double fm = mirror ? f(xm) : 0.0;
        // new bracket: the lowest point and its neighbours
        std::array<std::pair<double, double>, 5> pts{{{a, fa}, {c, fc}, {b, fb}, {x, fx}, {xm, fm}}};
        const auto end = pts.begin() + (mirror ? 5 : 4);
        std::sort(pts.begin(), end);
        std::size_t lo = 1;
        for (std::size_t i = 2; i + 1 < static_cast<std::size_t>(end - pts.begin()); ++i)
            if (pts[i].second < pts[lo].second) lo = i;
        std::tie(a, fa) = pts[lo - 1];
        std::tie(c, fc) = pts[lo];
        std::tie(b, fb) = pts[lo + 1];
    }
    return {c, fc};
}

inline std::vector<double> sigma_row(const Polygon& p, const std::vector<Fan>& fans, const std::vector<cplx>& pool,
                                     double k, const MPSConfig& cfg, std::size_t count) {
    const auto sp = subspace_problem(p, fans, k, pool, cfg, false);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < sp.sigma.size() && out.size() < count; ++i) out.push_back(sp.sigma(i));
    out.resize(count, 1.0);
    return out;
}

} // namespace detail

// All Dirichlet eigenvalues below lambda_max by the method of particular solutions.
inline Spectrum dirichlet_eigenvalues(const Polygon& p, double lambda_max, const MPSConfig& cfg = {}) {
    if (!(lambda_max > 0.0)) input_error("BadLambda", "lambda_max must be positive");
    const auto fans = detail::polygon_fans(p, cfg.interior_expansion);
    const auto pool = detail::interior_pool(p, 4096, cfg.seed);
    const double k_hi = std::sqrt(lambda_max);
    const double k_lo = 0.98 * detail::faber_krahn_k(p);
    Spectrum out;
    out.lambda_max = lambda_max;
    if (k_lo >= k_hi) {
        out.count_check = weyl_check(p, out.eigenvalues, lambda_max, cfg.weyl_cw);
        return out;
    }
    // grid uniform in k^2 at a fixed fraction of the mean spacing
    const double dl = cfg.sweep_fraction * 4.0 * kPi / p.area;
    std::vector<double> ks;
    for (double l = k_lo * k_lo; l < lambda_max + 2.0 * dl; l += dl) ks.push_back(std::sqrt(l));
    const std::size_t ng = ks.size();
    constexpr std::size_t kRows = 6;
    std::vector<std::vector<double>> sig(ng);
    const int nt = std::max(1, cfg.threads);
    if (nt == 1) {
        for (std::size_t i = 0; i < ng; ++i) sig[i] = detail::sigma_row(p, fans, pool, ks[i], cfg, kRows);
    } else {
        std::vector<std::thread> workers;
        for (int t = 0; t < nt; ++t)
            workers.emplace_back([&, t] {
                for (std::size_t i = static_cast<std::size_t>(t); i < ng; i += static_cast<std::size_t>(nt))
                    sig[i] = detail::sigma_row(p, fans, pool, ks[i], cfg, kRows);
            });
        for (auto& w : workers) w.join();
    }

    std::vector<detail::Found> found;
    // Records an accepted minimum; returns the multiplicity and sigma_{m+1} there.
    auto add = [&](double k) -> std::pair<std::size_t, double> {
        const auto row = detail::sigma_row(p, fans, pool, k, cfg, kRows);
        if (row[0] > cfg.accept_tol) return {0, row[0]};
        std::size_t m = 0;
        while (m < row.size() && row[m] < std::max(cfg.mult_tol, 10.0 * row[0])) ++m;
        // two minima are one eigenvalue unless sigma rises between them
        auto same = [&](const detail::Found& f) {
            if (std::abs(f.k - k) < 1e-9 * k) return true;
            if (std::abs(f.k - k) > ks[1] - ks[0]) return false;
            const double mid = detail::sigma_row(p, fans, pool, 0.5 * (f.k + k), cfg, 1)[0];
            return mid < 10.0 * std::max(f.sigma, row[0]) + 1e-12;
        };
        auto it = std::find_if(found.begin(), found.end(), same);
        if (it == found.end()) found.push_back({k, row[0], m});
        else if (row[0] < it->sigma) *it = {k, row[0], std::max(m, it->mult)};
        return {m, m < row.size() ? row[m] : 0.0};
    };
    for (std::size_t i = 1; i + 1 < ng; ++i) {
        const double here = sig[i][0], left = sig[i - 1][0], right = sig[i + 1][0];
        if (!(here <= left && here < right)) continue;
        const double a = ks[i - 1], b = ks[i + 1];
        const double known[3] = {left, here, right};
        const double k = detail::refine_minimum(p, fans, pool, a, ks[i], b, cfg, known).first;
        const auto [m, next] = add(k);
        if (m == 0 || m >= kRows) continue;
        // a second eigenvalue inside the same dip leaves sigma_{m+1} small at the minimum; the
        // neighbour on the far side of it can sit in the second dip, so the slope uses the larger
        const double slope = std::max(left, right) / (0.5 * (b - a));
        const double delta = next / std::max(slope, 1e-12);
        if (delta < 2.0 * (b - a))
            for (double side : {-1.0, 1.0})
                add(detail::refine_minimum(p, fans, pool, std::min(k + side * 0.3 * delta, k + side * 2.0 * delta),
                                            k + side * delta, std::max(k + side * 0.3 * delta, k + side * 2.0 * delta),
                                            cfg).first);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
    for (const auto& f : found) {
        const double lam = f.k * f.k;
        if (lam >= lambda_max) continue;
        for (std::size_t m = 0; m < f.mult; ++m) {
            out.eigenvalues.push_back(lam);
            out.errors.push_back(lam * std::max(f.sigma, 1e-16));
        }
    }
    out.count_check = weyl_check(p, out.eigenvalues, lambda_max, cfg.weyl_cw);
    if (!out.count_check.ok)
        numerical_error("MissedEigenvalue", "counting function deviates from Weyl by " +
                                                std::to_string(out.count_check.deviation) + " at lambda " +
                                                std::to_string(lambda_max) + " (mean over the top half " +
                                                std::to_string(out.count_check.mean_deviation) + ")");
    return out;
}

// Weyl estimate of the cutoff holding at least n eigenvalues.
inline double weyl_cutoff(const Polygon& p, std::size_t n) {
    const double b1 = corner_beta1(p);
    double lo = 0.0, hi = 1.0;
    while (weyl_count(p.area, p.perimeter, b1, hi) < static_cast<double>(n)) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
        const double m = 0.5 * (lo + hi);
        (weyl_count(p.area, p.perimeter, b1, m) < static_cast<double>(n) ? lo : hi) = m;
    }
    return hi;
}

// Eigenvalue near a guess, by a local sweep over +-window mean spacings and refinement.
inline double refine_eigenvalue(const Polygon& p, double lambda_guess, const MPSConfig& cfg = {}, double window = 0.5) {
    if (!(lambda_guess > 0.0)) input_error("BadLambda", "lambda must be positive");
    const auto fans = detail::polygon_fans(p, cfg.interior_expansion);
    const auto pool = detail::interior_pool(p, 4096, cfg.seed);
    const double spacing = 4.0 * kPi / p.area;
    const double dl = cfg.sweep_fraction * spacing;
    double best_k = 0.0, best_s = INFINITY;
    std::vector<double> ks, sg;
    for (double l = std::max(lambda_guess - window * spacing, 0.25 * lambda_guess); l <= lambda_guess + window * spacing; l += dl) {
        ks.push_back(std::sqrt(l));
        sg.push_back(detail::sigma_row(p, fans, pool, ks.back(), cfg, 1)[0]);
    }
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
        if (!(sg[i] <= sg[i - 1] && sg[i] < sg[i + 1])) continue;
        const double known[3] = {sg[i - 1], sg[i], sg[i + 1]};
        const auto [k, sv] = detail::refine_minimum(p, fans, pool, ks[i - 1], ks[i], ks[i + 1], cfg, known);
        if (sv < cfg.accept_tol && std::abs(k * k - lambda_guess) < std::abs(best_k * best_k - lambda_guess)) {
            best_k = k;
            best_s = sv;
        }
    }
    if (!(best_s < cfg.accept_tol))
        numerical_error("MissedEigenvalue", "no eigenvalue within the window around " + std::to_string(lambda_guess));
    return best_k * best_k;
}

struct EigenVariation {
    double lambda = 0.0;
    double variation = 0.0;
    std::size_t multiplicity = 1;
};

namespace detail {

inline EigenVariation flux_variation(const Polygon& p, const DeformationField& f, std::size_t j, bool allow_cluster,
                                     const Spectrum& s, const MPSConfig& cfg) {
    if (j == 0) input_error("BadIndex", "eigenvalue index is 1-based");
    if (f.c0.size() != p.size()) input_error("FieldSize", "field does not match the polygon");
    if (s.size() < j + 1) input_error("BadIndex", "spectrum too short for index " + std::to_string(j));
    const auto& e = s.eigenvalues;
    const double lam = e[j - 1];
    std::size_t first = j - 1, last = j - 1;
    while (first > 0 && e[first - 1] > lam * (1.0 - cfg.gap_tol)) --first;
    while (last + 1 < e.size() && e[last + 1] < lam * (1.0 + cfg.gap_tol)) ++last;
    const std::size_t mult = last - first + 1;
    if (mult > 1 && !allow_cluster)
        input_error("DegenerateEigenvalue", "lambda_" + std::to_string(j) + " belongs to a cluster of " +
                                                std::to_string(mult) + "; use the cluster trace variation");
    EigenVariation out;
    out.lambda = lam;
    out.multiplicity = mult;
    double mean = 0.0;
    for (std::size_t i = first; i <= last; ++i) mean += e[i] / static_cast<double>(mult);
    for (const auto& u : mps_eigenfunctions(p, mean, mult, cfg))
        out.variation -= boundary_flux_integral(p, u, [&](std::size_t side, double t) { return f.normal_velocity(side, t); },
                                                cfg.quad_order, cfg.quad_levels);
    return out;
}

// Spectrum holding index j and a few neighbours.
inline Spectrum spectrum_through(const Polygon& p, std::size_t j, const MPSConfig& cfg) {
    return dirichlet_eigenvalues(p, 1.3 * weyl_cutoff(p, j + 4) + 4.0 * kPi / p.area, cfg);
}

} // namespace detail

// delta lambda_j = -int (d_nu u_j)^2 (A.nu) dl for a simple eigenvalue, j 1-based.
inline double hadamard_eigenvalue_variation(const Polygon& p, const DeformationField& f, std::size_t j,
                                            const Spectrum& s, const MPSConfig& cfg = {}) {
    return detail::flux_variation(p, f, j, false, s, cfg).variation;
}

inline double hadamard_eigenvalue_variation(const Polygon& p, const DeformationField& f, std::size_t j,
                                            const MPSConfig& cfg = {}) {
    return hadamard_eigenvalue_variation(p, f, j, detail::spectrum_through(p, j, cfg), cfg);
}

// Variation of the sum of the eigenvalues in the cluster containing lambda_j.
inline EigenVariation hadamard_cluster_variation(const Polygon& p, const DeformationField& f, std::size_t j,
                                                 const Spectrum& s, const MPSConfig& cfg = {}) {
    return detail::flux_variation(p, f, j, true, s, cfg);
}

inline EigenVariation hadamard_cluster_variation(const Polygon& p, const DeformationField& f, std::size_t j,
                                                 const MPSConfig& cfg = {}) {
    return hadamard_cluster_variation(p, f, j, detail::spectrum_through(p, j, cfg), cfg);
}

} // namespace polydet

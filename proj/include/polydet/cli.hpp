#pragma once

#include <json.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "validation.hpp"

namespace polydet::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct RunConfig {
    double lambda_max = 0.0;     // 0 selects lambda_scale / w^2, w the narrowest width
    double lambda_scale = 600.0;
    double fd_step = 5e-3;       // vertex-velocity step of the fd route
    int wz_grid = 512;
    double wz_fd_eps = 1e-4;
    MPSConfig mps;
    ZetaConfig zeta;
    SCConfig sc;
    VarConfig var;
    std::string format = "json";
    std::string cache_dir;
    std::string suite = "all";
};

namespace detail {

template <class V>
void visit(MPSConfig& c, V&& v) {
    v("basis_factor", c.basis_factor);
    v("basis_extra", c.basis_extra);
    v("corner_extra", c.corner_extra);
    v("points_per_wavelength", c.points_per_wavelength);
    v("boundary_oversample", c.boundary_oversample);
    v("interior_ratio", c.interior_ratio);
    v("interior_expansion", c.interior_expansion);
    v("rank_tol", c.rank_tol);
    v("sweep_fraction", c.sweep_fraction);
    v("accept_tol", c.accept_tol);
    v("mult_tol", c.mult_tol);
    v("weyl_cw", c.weyl_cw);
    v("gap_tol", c.gap_tol);
    v("cond_limit", c.cond_limit);
    v("quad_order", c.quad_order);
    v("quad_levels", c.quad_levels);
    v("threads", c.threads);
    v("seed", c.seed);
}

template <class V>
void visit(ZetaConfig& c, V&& v) {
    v("tau0", c.tau0);
    v("tail_tol", c.tail_tol);
    v("tau0_shift", c.tau0_shift);
    v("cutoff_shift", c.cutoff_shift);
}

template <class V>
void visit(SCConfig& c, V&& v) {
    v("tol", c.tol);
    v("max_iter", c.max_iter);
    v("order", c.order);
    v("accept", c.accept);
    v("init_jitter", c.init_jitter);
    v("seed", c.seed);
}

template <class V>
void visit(VarConfig& c, V&& v) {
    v("grade_levels", c.grade_levels);
    v("diag_eps", c.diag_eps);
    v("mismatch_ratio", c.mismatch_ratio);
    v("mismatch_floor", c.mismatch_floor);
    v("check_counterterms", c.check_counterterms);
    v("contour_eps", c.contour_eps);
    v("contour_points", c.contour_points);
}

template <class V>
void visit(RunConfig& c, V&& v) {
    v("lambda_max", c.lambda_max);
    v("lambda_scale", c.lambda_scale);
    v("fd_step", c.fd_step);
    v("wz_grid", c.wz_grid);
    v("wz_fd_eps", c.wz_fd_eps);
    v("format", c.format);
    v("cache_dir", c.cache_dir);
    v("suite", c.suite);
}

template <class T>
json section_json(T c) {
    json j = json::object();
    visit(c, [&](const char* k, const auto& x) { j[k] = x; });
    return j;
}

template <class T>
void read_section(const json& j, T& c, const std::string& where) {
    if (!j.is_object()) input_error("BadConfig", where + " must be an object");
    std::vector<std::string> known;
    visit(c, [&](const char* k, auto&) { known.emplace_back(k); });
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) input_error("BadConfig", "unknown key " + where + "." + k);
    visit(c, [&](const char* k, auto& x) {
        if (!j.contains(k)) return;
        try {
            x = j.at(k).get<std::decay_t<decltype(x)>>();
        } catch (const json::exception&) {
            input_error("BadConfig", "wrong type for " + where + "." + k);
        }
    });
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace detail

inline std::string content_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, detail::fnv1a(j.dump()));
    return buf;
}

inline json config_json(const RunConfig& c) {
    json j = detail::section_json(c);
    j["mps"] = detail::section_json(c.mps);
    j["zeta"] = detail::section_json(c.zeta);
    j["scmap"] = detail::section_json(c.sc);
    j["var"] = detail::section_json(c.var);
    return j;
}

inline void read_config(const json& j, RunConfig& c) {
    json top = j;
    for (const char* k : {"mps", "zeta", "scmap", "var"}) top.erase(k);
    detail::read_section(top, c, "cfg");
    if (j.contains("mps")) detail::read_section(j.at("mps"), c.mps, "mps");
    if (j.contains("zeta")) detail::read_section(j.at("zeta"), c.zeta, "zeta");
    if (j.contains("scmap")) detail::read_section(j.at("scmap"), c.sc, "scmap");
    if (j.contains("var")) detail::read_section(j.at("var"), c.var, "var");
}

inline void validate_config(const RunConfig& c) {
    const std::pair<const char*, double> positive[] = {
        {"lambda_scale", c.lambda_scale},     {"fd_step", c.fd_step},
        {"wz_fd_eps", c.wz_fd_eps},           {"mps.rank_tol", c.mps.rank_tol},
        {"mps.sweep_fraction", c.mps.sweep_fraction}, {"mps.accept_tol", c.mps.accept_tol},
        {"mps.mult_tol", c.mps.mult_tol},     {"mps.gap_tol", c.mps.gap_tol},
        {"mps.cond_limit", c.mps.cond_limit}, {"zeta.tail_tol", c.zeta.tail_tol},
        {"scmap.tol", c.sc.tol},              {"scmap.accept", c.sc.accept},
        {"var.mismatch_floor", c.var.mismatch_floor}};
    for (const auto& [k, v] : positive)
        if (!(v > 0.0)) input_error("BadConfig", std::string(k) + " must be positive");
    if (!(c.lambda_max >= 0.0)) input_error("BadConfig", "lambda_max must be >= 0");
    if (c.format != "json" && c.format != "csv") input_error("BadConfig", "format must be json or csv");
    if (c.mps.threads < 1) input_error("BadConfig", "threads must be >= 1");
}

// Everything that can change a numerical result; output plumbing and threads are left out.
inline std::string config_hash(const RunConfig& c) {
    json j = config_json(c);
    for (const char* k : {"format", "cache_dir", "suite"}) j.erase(k);
    j["mps"].erase("threads");
    return content_hash(j);
}

// Cutoff for a polygon; an explicit value must be at least ten times the Weyl estimate 4 pi/|P| of lambda_1.
inline double resolve_lambda_max(const RunConfig& c, const Polygon& p) {
    if (c.lambda_max == 0.0) return validation::default_lambda_max(p, c.lambda_scale);
    const double l1 = 4.0 * kPi / p.area;
    if (c.lambda_max < 10.0 * l1)
        input_error("BadConfig", "lambda_max " + std::to_string(c.lambda_max) + " is below 10 x the Weyl estimate " +
                                     std::to_string(l1) + " of lambda_1");
    return c.lambda_max;
}

// ---- JSON input ----

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) input_error("BadInput", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        input_error("BadInput", path + ": " + e.what());
    }
}

inline cplx point(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        input_error("BadInput", what + " entries must be [x, y] number pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<cplx> points(const json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) input_error("BadInput", what + " needs an array \"" + key + "\"");
    std::vector<cplx> out;
    for (const auto& e : j.at(key)) out.push_back(point(e, key));
    return out;
}

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json points_json(const std::vector<cplx>& v) {
    json a = json::array();
    for (cplx z : v) a.push_back(to_json(z));
    return a;
}

inline Polygon polygon_from_json(const json& j) { return build_polygon(points(j, "vertices", "polygon")); }

inline json polygon_json(const Polygon& p) { return {{"vertices", points_json(p.vertices)}}; }

inline std::vector<cplx> velocities_from_json(const json& j, const Polygon& p) {
    auto v = points(j, "vertex_velocities", "field");
    if (v.size() != p.size())
        input_error("FieldSize", "expected " + std::to_string(p.size()) + " vertex velocities, got " + std::to_string(v.size()));
    return v;
}

inline std::vector<cplx> taylor_from_json(const json& j, const std::string& what) { return points(j, "taylor", what); }

// ---- caches ----

inline std::optional<fs::path> cache_dir(const RunConfig& c) {
    if (!c.cache_dir.empty()) return fs::path(c.cache_dir);
    if (const char* e = std::getenv("POLYDET_CACHE"); e && *e) return fs::path(e);
    return std::nullopt;
}

inline json scmap_json(const SCMap& m) {
    return {{"prevertices", m.prevertices}, {"theta", m.theta},         {"C", to_json(m.C)},
            {"base", to_json(m.base)},      {"residual", m.residual},   {"iterations", m.iterations},
            {"crowding", m.crowding}};
}

inline std::string scmap_key(const Polygon& p, const RunConfig& c) {
    return content_hash({{"polygon", polygon_json(p)}, {"scmap", detail::section_json(c.sc)}});
}

// Solves the parameter problem or loads it from the cache; status is hit, miss or off.
inline SCMap cached_scmap(const Polygon& p, const RunConfig& c, std::string& status) {
    const auto dir = cache_dir(c);
    const std::string key = scmap_key(p, c);
    if (dir) {
        const fs::path f = *dir / ("scmap-" + key + ".json");
        if (fs::exists(f)) {
            const json j = read_json_file(f.string());
            SCMap m(p, j.at("theta").get<std::vector<double>>(), c.sc.order);
            m.iterations = j.at("iterations").get<int>();
            status = "hit";
            return m;
        }
    }
    SCMap m = solve_parameter_problem(p, c.sc);
    status = dir ? "miss" : "off";
    if (dir) {
        fs::create_directories(*dir);
        json j = scmap_json(m);
        j["polygon"] = polygon_json(p);
        std::ofstream(*dir / ("scmap-" + key + ".json")) << j.dump(2) << '\n';
    }
    return m;
}

inline std::string spectrum_key(const Polygon& p, double lambda_max, const RunConfig& c) {
    json mps = detail::section_json(c.mps);
    mps.erase("threads");
    return content_hash({{"polygon", polygon_json(p)}, {"mps", mps}, {"lambda_max", lambda_max}});
}

inline json count_check_json(const CountCheck& k) {
    return {{"lambda", k.lambda}, {"count", k.count}, {"weyl", k.weyl}, {"deviation", k.deviation}, {"bound", k.bound},
            {"mean_deviation", k.mean_deviation}, {"mean_bound", k.mean_bound}, {"ok", k.ok}};
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_spectrum_csv(const fs::path& f, const Spectrum& s) {
    std::ofstream out(f, std::ios::binary);
    out << "lambda,error_estimate\n";
    for (std::size_t i = 0; i < s.size(); ++i) out << format_double(s.eigenvalues[i]) << ',' << format_double(s.errors[i]) << '\n';
}

inline Spectrum read_spectrum_csv(const fs::path& f) {
    std::ifstream in(f);
    if (!in) input_error("BadCache", "cannot read " + f.string());
    std::string line;
    std::getline(in, line);
    if (line != "lambda,error_estimate") input_error("BadCache", f.string() + ": unexpected header");
    Spectrum s;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) input_error("BadCache", f.string() + ": malformed row");
        s.eigenvalues.push_back(std::strtod(line.c_str(), nullptr));
        s.errors.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
    }
    return s;
}

// MPS spectrum below lambda_max, through the cache when one is configured.
inline Spectrum cached_spectrum(const Polygon& p, double lambda_max, const RunConfig& c, std::string& status) {
    const auto dir = cache_dir(c);
    const std::string key = spectrum_key(p, lambda_max, c);
    if (dir) {
        const fs::path csv = *dir / ("spectrum-" + key + ".csv"), side = *dir / ("spectrum-" + key + ".json");
        if (fs::exists(csv) && fs::exists(side)) {
            Spectrum s = read_spectrum_csv(csv);
            s.lambda_max = lambda_max;
            s.count_check = weyl_check(p, s.eigenvalues, lambda_max, c.mps.weyl_cw);
            status = "hit";
            return s;
        }
    }
    Spectrum s = dirichlet_eigenvalues(p, lambda_max, c.mps);
    status = dir ? "miss" : "off";
    if (dir) {
        fs::create_directories(*dir);
        write_spectrum_csv(*dir / ("spectrum-" + key + ".csv"), s);
        json mps = detail::section_json(c.mps);
        mps.erase("threads");
        const json side{{"key", key},
                        {"polygon", polygon_json(p)},
                        {"polygon_hash", content_hash(polygon_json(p))},
                        {"lambda_max", lambda_max},
                        {"mps", mps},
                        {"n_eigs", s.size()},
                        {"count_check", count_check_json(s.count_check)}};
        std::ofstream(*dir / ("spectrum-" + key + ".json")) << side.dump(2) << '\n';
    }
    return s;
}

// ---- commands ----

struct Outcome {
    json results = json::object();
    json diagnostics = json::object();
    json cache = json::object();
    json timings = json::object();
    bool ok = true;  // false only for failed validation checks
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

inline json logdet_json(const LogDet& d) {
    return {{"logdet", d.value},
            {"error", d.error_estimate},
            {"n_eigs", d.n_eigs_used},
            {"diagnostics",
             {{"tau0", d.diagnostics.tau0},
              {"cutoff", d.diagnostics.cutoff},
              {"tail", d.diagnostics.tail},
              {"tau0_change", d.diagnostics.tau0_change},
              {"cutoff_change", d.diagnostics.cutoff_change},
              {"heat_residual", d.diagnostics.heat_residual}}}};
}

inline json variation_json(const DeterminantVariation& v) {
    json sides = json::array();
    for (const auto& s : v.hadamard.sides)
        sides.push_back({{"side", s.side}, {"a0", s.a0}, {"b0", s.b0}, {"a1", s.a1}, {"b1", s.b1}, {"finite_part", s.finite_part}});
    json j{{"boundary_term", v.boundary_term}, {"corner_term", v.corner_term}, {"total", v.total}, {"route", v.route}};
    if (v.route == "hadamard")
        j["hadamard"] = {{"value", v.hadamard.value},       {"eps", v.hadamard.eps},
                         {"residual_eps", v.hadamard.residual_eps}, {"residual_half", v.hadamard.residual_half},
                         {"slope", v.hadamard.slope},       {"sides", sides}};
    else
        j["contour_change"] = v.contour_change;
    return j;
}

} // namespace detail

inline Outcome cmd_scmap(const std::string& polygon_file, const RunConfig& c) {
    const auto t0 = detail::Clock::now();
    const Polygon p = polygon_from_json(read_json_file(polygon_file));
    std::string status;
    const SCMap m = cached_scmap(p, c, status);
    Outcome o;
    o.results = scmap_json(m);
    o.results["unknowns"] = static_cast<int>(p.size()) - 3;
    o.results["n"] = p.size();
    o.diagnostics = {{"residual", m.residual}, {"accept", c.sc.accept}, {"mapped_side_lengths", m.mapped_side_lengths}};
    o.cache["scmap"] = status;
    o.timings["total_s"] = detail::seconds_since(t0);
    return o;
}

// Determinant of one polygon; shared by det and the fd route of var.
inline LogDet polygon_det(const Polygon& p, double lambda_max, const RunConfig& c, Outcome& o, const std::string& tag) {
    const auto t0 = detail::Clock::now();
    std::string status;
    const Spectrum s = cached_spectrum(p, lambda_max, c, status);
    o.cache[tag] = status;
    o.timings[tag + "_eigensolve_s"] = detail::seconds_since(t0);
    o.diagnostics[tag] = {{"lambda_max", lambda_max},
                          {"n_eigs_found", s.size()},
                          {"max_eigenvalue_error", s.errors.empty() ? 0.0 : *std::max_element(s.errors.begin(), s.errors.end())},
                          {"weyl", count_check_json(s.count_check)}};
    return zeta_logdet(s, heat_coefficients(p), c.zeta);
}

inline Outcome cmd_det(const std::string& polygon_file, const RunConfig& c) {
    const auto t0 = detail::Clock::now();
    const Polygon p = polygon_from_json(read_json_file(polygon_file));
    const double cut = resolve_lambda_max(c, p);
    Outcome o;
    const LogDet d = polygon_det(p, cut, c, o, "spectrum");
    o.results = detail::logdet_json(d);
    o.timings["total_s"] = detail::seconds_since(t0);
    return o;
}

inline Outcome cmd_var(const std::string& polygon_file, const std::string& field_file, const std::string& route,
                       const RunConfig& c) {
    if (route != "formula" && route != "fd" && route != "both") input_error("BadRoute", "route must be formula, fd or both");
    const auto t0 = detail::Clock::now();
    const Polygon p = polygon_from_json(read_json_file(polygon_file));
    const auto v = velocities_from_json(read_json_file(field_file), p);
    const DeformationField f = field_from_vertex_velocities(p, v);
    Outcome o;
    o.results["route"] = route;
    o.results["delta_angles"] = f.delta_angles;
    o.results["delta_area"] = f.delta_area;
    o.results["delta_perimeter"] = f.delta_perimeter;
    double total = 0.0;
    if (route != "fd") {
        std::string status;
        const SCMap m = cached_scmap(p, c, status);
        o.cache["scmap"] = status;
        const auto r = main_formula(m, f, c.var);
        total = r.total;
        o.results["formula"] = detail::variation_json(r);
        o.diagnostics["scmap_residual"] = m.residual;
        // the contour route only covers parallel side shifts
        const bool shifts = std::all_of(f.c1.begin(), f.c1.end(), [](double x) { return x == 0.0; });
        if (shifts) {
            const auto k = contour_shift_integral(m, f, c.var);
            o.results["contour"] = detail::variation_json(k);
            o.results["route_discrepancy"] = std::abs(k.total - r.total);
        } else {
            o.results["contour"] = nullptr;
        }
        o.timings["formula_s"] = detail::seconds_since(t0);
    }
    if (route != "formula") {
        const double cut = resolve_lambda_max(c, p), t = c.fd_step;
        auto L = [&](double s, const std::string& tag) { return polygon_det(moved_polygon(p, v, s), cut, c, o, tag).value; };
        const double lp = L(t, "plus"), lm = L(-t, "minus"), hp = L(0.5 * t, "half_plus"), hm = L(-0.5 * t, "half_minus");
        const double d1 = (lp - lm) / (2 * t), d2 = (hp - hm) / t;
        const double fd = (4.0 * d2 - d1) / 3.0;
        o.results["fd"] = {{"value", fd}, {"step", t}, {"difference_step", d1}, {"difference_half", d2}, {"lambda_max", cut},
                           {"logdets", {{"plus", lp}, {"minus", lm}, {"half_plus", hp}, {"half_minus", hm}}}};
        if (route == "both") o.results["discrepancy"] = std::abs(total - fd);
    }
    o.timings["total_s"] = detail::seconds_since(t0);
    return o;
}

inline Outcome cmd_wz(const std::string& domain_file, const std::string& field_file, const RunConfig& c) {
    const auto t0 = detail::Clock::now();
    const SmoothDomain d{taylor_from_json(read_json_file(domain_file), "domain")};
    const auto V = taylor_from_json(read_json_file(field_file), "field");
    check_domain(d);
    const auto r = wz_vs_alvarez_fd(d, V, c.wz_fd_eps, c.wz_grid);
    Outcome o;
    o.results = {{"wz_variation", r.formula},
                 {"alvarez_fd", r.fd},
                 {"fd_eps", c.wz_fd_eps},
                 {"discrepancy", std::abs(r.formula - r.fd)},
                 {"alvarez_logdet", alvarez_logdet(d, c.wz_grid)}};
    o.timings["total_s"] = detail::seconds_since(t0);
    return o;
}

inline Outcome cmd_validate(const std::string& suite) {
    const auto t0 = detail::Clock::now();
    const auto checks = validation::run_suite(suite);
    Outcome o;
    json table = json::array();
    int passed = 0;
    for (const auto& k : checks) {
        table.push_back({{"id", k.id}, {"name", k.name}, {"measured", std::isfinite(k.measured) ? json(k.measured) : json("inf")},
                         {"tolerance", k.tolerance}, {"pass", k.pass}, {"note", k.note}});
        o.timings["check_" + k.id + "_s"] = k.seconds;
        passed += k.pass;
    }
    o.results = {{"suite", suite}, {"passed", passed}, {"total", checks.size()}, {"table", table}};
    o.ok = passed == static_cast<int>(checks.size());
    o.timings["total_s"] = detail::seconds_since(t0);
    return o;
}

// ---- report output ----

inline json report_json(const std::vector<std::string>& command, const RunConfig& c, const Outcome& o) {
    return {{"command", command},   {"config_hash", config_hash(c)}, {"seed", c.mps.seed},
            {"results", o.results}, {"diagnostics", o.diagnostics},  {"cache", o.cache},
            {"timings", o.timings}};
}

namespace detail {

inline std::string csv_value(const json& v) {
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    }
    return v.dump();
}

inline void flatten(const json& j, const std::string& prefix, std::ostringstream& out) {
    if (j.is_object() || j.is_array()) {
        if (j.empty()) out << prefix << ",\n";
        std::size_t i = 0;
        for (const auto& [k, v] : j.items()) {
            const std::string key = j.is_array() ? std::to_string(i++) : k;
            flatten(v, prefix.empty() ? key : prefix + "." + key, out);
        }
        return;
    }
    out << prefix << ',' << csv_value(j) << '\n';
}

} // namespace detail

// CSV: a results table becomes rows with a header, anything else key,value pairs.
inline std::string results_csv(const json& results) {
    std::ostringstream out;
    if (results.contains("table") && results.at("table").is_array() && !results.at("table").empty()) {
        const json& t = results.at("table");
        bool first = true;
        for (const auto& [k, _] : t[0].items()) out << (first ? "" : ",") << k, first = false;
        out << '\n';
        for (const auto& row : t) {
            first = true;
            for (const auto& [k, v] : row.items()) out << (first ? "" : ",") << detail::csv_value(v), first = false;
            out << '\n';
        }
        return out.str();
    }
    out << "key,value\n";
    detail::flatten(results, "", out);
    return out.str();
}

} // namespace polydet::cli

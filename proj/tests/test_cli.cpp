#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
    int code = -1;
    std::string out;
    json report() const { return json::parse(out); }
};

std::string data(const std::string& name) { return std::string(POLYDET_DATA_DIR) + "/" + name; }

Invocation polydet(const std::string& args) {
    const std::string cmd = std::string(POLYDET_CLI_PATH) + " " + args + " 2>/dev/null";
    Invocation r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("polydet-test-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    std::string str() const { return path_.string(); }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

// log det of the unit square from its closed form
constexpr double kSquareLogDet = -0.610245660528891;

} // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(polydet("--help").code, 0);
    EXPECT_EQ(polydet("").code, 2);
    EXPECT_EQ(polydet("frobnicate").code, 2);
    EXPECT_EQ(polydet("det").code, 2);
    EXPECT_EQ(polydet("var " + data("square.json") + " " + data("dilation_square.json") + " --route sideways").code, 2);
    EXPECT_EQ(polydet("validate nonsense").code, 2);
}

TEST(Cli, ScmapReportAndCache) {
    TempDir cache;
    const Invocation first = polydet("scmap " + data("pentagon.json") + " --cache-dir " + cache.str());
    ASSERT_EQ(first.code, 0);
    const json a = first.report();
    EXPECT_EQ(a["command"][0], "scmap");
    EXPECT_EQ(a["cache"]["scmap"], "miss");
    EXPECT_EQ(a["results"]["n"], 5);
    EXPECT_EQ(a["results"]["unknowns"], 2);
    EXPECT_LT(a["diagnostics"]["residual"].get<double>(), 1e-10);
    EXPECT_EQ(a["config_hash"].get<std::string>().size(), 16u);

    const json b = polydet("scmap " + data("pentagon.json") + " --cache-dir " + cache.str()).report();
    EXPECT_EQ(b["cache"]["scmap"], "hit");
    EXPECT_EQ(a["results"].dump(), b["results"].dump());
    EXPECT_EQ(a["config_hash"], b["config_hash"]);
}

TEST(Cli, InputErrors) {
    const Invocation nonconvex = polydet("scmap " + data("nonconvex.json"));
    EXPECT_EQ(nonconvex.code, 2);
    EXPECT_EQ(nonconvex.report()["error"]["kind"], "NonConvex");

    TempDir dir;
    std::ofstream(dir / "garbage.json") << "{ not json";
    EXPECT_EQ(polydet("scmap " + (dir / "garbage.json").string()).code, 2);
    EXPECT_EQ(polydet("scmap " + (dir / "missing.json").string()).code, 2);

    // field with the wrong number of vertex velocities
    std::ofstream(dir / "short.json") << R"({"vertex_velocities": [[0, 0], [1, 0]]})";
    EXPECT_EQ(polydet("var " + data("square.json") + " " + (dir / "short.json").string()).code, 2);

    std::ofstream(dir / "typo.json") << R"({"mps": {"acept_tol": 1e-6}})";
    const Invocation typo = polydet("--cfg " + (dir / "typo.json").string() + " scmap " + data("square.json"));
    EXPECT_EQ(typo.code, 2);
    EXPECT_EQ(typo.report()["error"]["kind"], "BadConfig");
}

TEST(Cli, CsvAndOutFile) {
    const Invocation csv = polydet("scmap " + data("triangle.json") + " --format csv");
    ASSERT_EQ(csv.code, 0);
    EXPECT_EQ(csv.out.find('{'), std::string::npos);
    EXPECT_NE(csv.out.find("residual,"), std::string::npos);

    TempDir dir;
    const fs::path out = dir / "report.json";
    const Invocation quiet = polydet("scmap " + data("square.json") + " --out " + out.string());
    EXPECT_EQ(quiet.code, 0);
    EXPECT_TRUE(quiet.out.empty());
    std::ifstream in(out);
    const json r = json::parse(in);
    EXPECT_EQ(r["results"]["n"], 4);
}

TEST(Cli, SquareDeterminantAndSpectrumCache) {
    TempDir cache;
    const Invocation first = polydet("det " + data("square.json") + " --cache-dir " + cache.str());
    ASSERT_EQ(first.code, 0);
    const json a = first.report();
    EXPECT_NEAR(a["results"]["logdet"].get<double>(), kSquareLogDet, 1e-6);
    EXPECT_EQ(a["cache"]["spectrum"], "miss");
    EXPECT_TRUE(a["diagnostics"]["spectrum"]["weyl"]["ok"].get<bool>());

    bool csv = false;
    for (const auto& e : fs::directory_iterator(cache.str()))
        csv = csv || (e.path().extension() == ".csv" && e.path().filename().string().rfind("spectrum-", 0) == 0);
    EXPECT_TRUE(csv);

    const json b = polydet("det " + data("square.json") + " --cache-dir " + cache.str()).report();
    EXPECT_EQ(b["cache"]["spectrum"], "hit");
    EXPECT_EQ(a["results"].dump(), b["results"].dump());
}

TEST(Cli, CutoffErrors) {
    // below ten times the Weyl estimate of the ground state
    const Invocation low = polydet("det " + data("square.json") + " --lambda-max 100");
    EXPECT_EQ(low.code, 2);
    EXPECT_EQ(low.report()["error"]["kind"], "BadConfig");
    const Invocation tail = polydet("det " + data("square.json") + " --lambda-max 200");
    EXPECT_EQ(tail.code, 3);
    EXPECT_EQ(tail.report()["error"]["kind"], "TailNotConverged");
}

TEST(Cli, VariationFormulaRoute) {
    // dilation: -2 zeta(0) = -1/2 on the square
    const json d = polydet("var " + data("square.json") + " " + data("dilation_square.json")).report();
    EXPECT_NEAR(d["results"]["formula"]["total"].get<double>(), -0.5, 1e-9);
    // every side moves parallel to itself, so the contour route applies too
    EXPECT_NEAR(d["results"]["contour"]["total"].get<double>(), -0.5, 1e-9);

    // sliding one apex along its base turns the sides, which the contour route does not cover
    const json s = polydet("var " + data("triangle.json") + " " + data("sliding_apex_triangle.json")).report();
    EXPECT_EQ(s["results"]["contour"], nullptr);

    const json t = polydet("var " + data("square.json") + " " + data("translation_square.json")).report();
    EXPECT_NEAR(t["results"]["formula"]["total"].get<double>(), 0.0, 1e-10);
    EXPECT_LT(t["results"]["route_discrepancy"].get<double>(), 1e-10);
}

TEST(Cli, SideShiftBothRoutes) {
    TempDir cache;
    const Invocation r = polydet("var " + data("square.json") + " " + data("side_shift_square.json") + " --route both --cache-dir " +
                          cache.str());
    ASSERT_EQ(r.code, 0);
    const json j = r.report();
    EXPECT_LT(j["results"]["route_discrepancy"].get<double>(), 1e-8);
    EXPECT_LT(j["results"]["discrepancy"].get<double>(), 1e-4);
}

TEST(Cli, SmoothDomainCheck) {
    const Invocation r = polydet("wz " + data("disk.json") + " " + data("dilation_disk.json"));
    ASSERT_EQ(r.code, 0);
    const json j = r.report();
    EXPECT_LT(j["results"]["discrepancy"].get<double>(), 1e-6);
    EXPECT_TRUE(std::isfinite(j["results"]["alvarez_logdet"].get<double>()));
}

TEST(Cli, ValidateSuite) {
    const Invocation r = polydet("validate geometry");
    EXPECT_EQ(r.code, 0);
    const json j = r.report();
    EXPECT_EQ(j["results"]["passed"], j["results"]["total"]);
    EXPECT_GE(j["results"]["total"].get<int>(), 1);
}

#include <gtest/gtest.h>

#include <polydet/smoothwz.hpp>

using namespace polydet;

namespace {
SmoothDomain dom(std::vector<cplx> a) { return SmoothDomain{std::move(a)}; }
const std::vector<cplx> kDilation{0.0, 1.0};
} // namespace

TEST(SmoothWZ, DiskLaw) {
    EXPECT_NEAR(wz_variation(dom({0.0, 1.0}), kDilation), -1.0 / 3.0, 1e-12);
    for (double r : {0.5, 2.0, 3.7}) EXPECT_NEAR(alvarez_logdet(dom({0.0, r})), -std::log(r) / 3.0, 1e-13);
    EXPECT_NEAR(alvarez_logdet(dom({0.0, 2.0})) - alvarez_logdet(dom({0.0, 1.0})), -std::log(2.0) / 3.0, 1e-12);
}

TEST(SmoothWZ, RigidMotionsGiveZero) {
    for (auto d : {dom({0.0, 1.0}), dom({0.0, 1.0, 0.1}), dom({0.2, 1.0, 0.0, 0.2, 0.05})}) {
        EXPECT_NEAR(wz_variation(d, {cplx(0.3, -0.7)}), 0.0, 1e-12);
        // rotation of the image about the origin: V = i z(w)
        std::vector<cplx> rot;
        for (auto a : d.taylor) rot.push_back(cplx(0, 1) * a);
        EXPECT_NEAR(wz_variation(d, rot), 0.0, 1e-12);
    }
}

TEST(SmoothWZ, RotationInvarianceOfAlvarez) {
    const double th = 0.731;
    std::vector<cplx> a{0.0, 1.0, 0.1}, b;
    for (std::size_t k = 0; k < a.size(); ++k) b.push_back(a[k] * std::polar(1.0, k * th));
    EXPECT_NEAR(alvarez_logdet(dom(a)), alvarez_logdet(dom(b)), 1e-12);
}

TEST(SmoothWZ, MoebiusFieldGivesZero) {
    // first-order field of the disk automorphism w -> (w + e a)/(1 + e conj(a) w)
    const cplx a(0.3, -0.4);
    EXPECT_NEAR(wz_variation(dom({0.0, 1.0}), {a, 0.0, -std::conj(a)}), 0.0, 1e-9);
}

TEST(SmoothWZ, LinearInV) {
    auto d = dom({0.0, 1.0, 0.15, 0.0, -0.04});
    std::vector<cplx> V1{0.0, 0.0, 1.0}, V2{0.1, cplx(0, 0.5), 0.0, 0.2};
    std::vector<cplx> V12{0.1, cplx(0, 0.5) * -2.0, 1.0, 0.2 * -2.0};
    const double lhs = wz_variation(d, V12);
    const double rhs = wz_variation(d, V1) - 2.0 * wz_variation(d, V2);
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(SmoothWZ, AgreesWithFiniteDifferenceOfAlvarez) {
    auto check = [](const SmoothDomain& d, const std::vector<cplx>& V) {
        auto r = wz_vs_alvarez_fd(d, V, 1e-4);
        EXPECT_NEAR(r.formula, r.fd, 1e-6);
    };
    check(dom({0.0, 1.0}), {0.0, 0.0, 1.0});
    check(dom({0.0, 1.0, 0.0, 0.2}), {0.0, 0.0, 1.0});
    auto disk = wz_vs_alvarez_fd(dom({0.0, 1.0}), kDilation, 1e-4);
    EXPECT_NEAR(disk.formula, -1.0 / 3.0, 1e-6);
    EXPECT_NEAR(disk.fd, -1.0 / 3.0, 1e-6);
}

TEST(SmoothWZ, CurvatureIdentity) {
    EXPECT_NEAR(curvature_identity_check(dom({0.0, 1.0})), 0.0, 1e-15);
    EXPECT_LT(curvature_identity_check(dom({0.0, 1.0, 0.1})), 1e-12);
    EXPECT_LT(curvature_identity_check(dom({0.0, 1.0, 0.0, 0.2, 0.05})), 1e-11);
}

TEST(SmoothWZ, SpectralConvergence) {
    auto d = dom({0.0, 1.0, 0.3});
    const double ref = detail::alvarez_raw(d, 2048);
    const double e32 = std::abs(detail::alvarez_raw(d, 32) - ref);
    const double e64 = std::abs(detail::alvarez_raw(d, 64) - ref);
    EXPECT_GT(e32, 0.0);
    EXPECT_LT(e64, std::max(1e-4 * e32, 1e-15));
}

TEST(SmoothWZ, Validation) {
    EXPECT_THROW(check_domain(dom({0.0, 1.0, 0.6})), Error); // z' = 1 + 1.2 w vanishes in the disk
    EXPECT_NO_THROW(check_domain(dom({0.0, 1.0, 0.3})));
    EXPECT_THROW(alvarez_logdet(dom({0.0, 1.0}), 100), Error);
}

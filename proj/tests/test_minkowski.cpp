#include <cmath>

#include "doctest.h"
#include "lloca/errors.hpp"
#include "lloca/minkowski.hpp"
#include "support.hpp"

using namespace lloca;

TEST_CASE("minkowski product and norm")
{
    CHECK(mink_product({2, 1, 0, 0}, {3, 0, 1, 0}) == doctest::Approx(6.0));
    CHECK(mink_norm({3, 0, 0, 5}) == doctest::Approx(4.0));
    CHECK(mink_norm({5, 3, 0, 0}) == doctest::Approx(4.0));
}

TEST_CASE("rest-frame boost")
{
    CHECK(max_abs_diff(boost_from_vector({1, 0, 0, 0}).m, Mat4::Identity()) == 0.0);

    const LorentzMatrix b = boost_from_vector({5, 3, 0, 0});
    CHECK(b(0, 0) == doctest::Approx(1.25));
    CHECK(b(0, 1) == doctest::Approx(-0.75));
    const FourVector rest = b * FourVector{5, 3, 0, 0};
    CHECK(rest.t() == doctest::Approx(4.0));
    CHECK(std::abs(rest.x()) < 1e-12);
    CHECK(is_lorentz(b, 1e-12));

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const FourVector p = testing::random_timelike(rng, 0.95);
        const FourVector r = boost_from_vector(p) * p;
        const double scale = std::abs(p.t()) + std::abs(p.x()) + std::abs(p.y()) + std::abs(p.z());
        CHECK(std::abs(r.x()) + std::abs(r.y()) + std::abs(r.z()) < 1e-10 * scale);
    }
}

TEST_CASE("boost rejects non-timelike or past-directed input")
{
    CHECK_THROWS_AS(boost_from_vector({1, 2, 0, 0}), DomainError);
    CHECK_THROWS_AS(boost_from_vector({-2, 1, 0, 0}), DomainError);
    CHECK_THROWS_AS(boost_from_vector({0, 0, 0, 0}), DomainError);
    CHECK_THROWS_AS(boost_from_velocity({0.6, 0.6, 0.6}), DomainError);
}

TEST_CASE("is_lorentz")
{
    CHECK(is_lorentz(LorentzMatrix::identity(), 1e-12));
    Mat4 d = Mat4::Identity();
    d(3, 3) = 2.0;
    CHECK_FALSE(is_lorentz(LorentzMatrix(d), 1e-12));
}

TEST_CASE("lorentz inverse")
{
    CHECK(max_abs_diff(lorentz_inverse(LorentzMatrix::identity()).m, Mat4::Identity()) == 0.0);

    Rng rng(5);
    const LorentzMatrix r = random_rotation(rng);
    Mat4 rt = r.m.transpose();
    CHECK(max_abs_diff(lorentz_inverse(r).m, rt) < 1e-15);

    const Vec3 beta{0.3, -0.2, 0.5};
    CHECK(max_abs_diff(lorentz_inverse(boost_from_velocity(beta)).m,
                       boost_from_velocity({-beta[0], -beta[1], -beta[2]}).m) < 1e-14);

    for (int i = 0; i < 100; ++i) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        CHECK(max_abs_diff((l * lorentz_inverse(l)).m, Mat4::Identity()) < 1e-12);
        CHECK(max_abs_diff(lorentz_inverse(lorentz_inverse(l)).m, l.m) < 1e-12);
    }
}

TEST_CASE("random rotations")
{
    Rng rng(11);
    const int n = 100000;
    Mat4 sum = Mat4::Zero();
    for (int i = 0; i < n; ++i) {
        const LorentzMatrix r = random_rotation(rng);
        if (i < 200) {
            REQUIRE(is_lorentz(r, 1e-12));
            CHECK(r.det() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(r(0, 0) == 1.0);
            for (int k = 1; k < 4; ++k) {
                CHECK(r(0, k) == 0.0);
                CHECK(r(k, 0) == 0.0);
            }
        }
        sum += r.m;
    }
    // Entries of a uniform rotation have mean 0 and variance 1/3.
    const double bound = 5.0 * std::sqrt(1.0 / 3.0 / n);
    for (int a = 1; a < 4; ++a)
        for (int b = 1; b < 4; ++b) CHECK(std::abs(sum(a, b) / n) < bound);
}

TEST_CASE("random boosts")
{
    Rng rng(13);
    CHECK(max_abs_diff(random_boost(rng, 0.0).m, Mat4::Identity()) == 0.0);
    for (int i = 0; i < 2000; ++i) {
        const LorentzMatrix b = random_boost(rng);
        REQUIRE(is_lorentz(b, 1e-12));
        // Velocity components from the first row: Lambda_0i = -gamma beta_i.
        for (int k = 1; k < 4; ++k) CHECK(std::abs(b(0, k) / b(0, 0)) <= 0.3 + 1e-15);
    }
    for (int i = 0; i < 200; ++i) {
        const LorentzMatrix l = random_lorentz(rng);
        CHECK(is_lorentz(l, 1e-12));
        CHECK(l.det() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(l(0, 0) >= 1.0 - 1e-12);
    }
}

TEST_CASE("seeded sampling is deterministic")
{
    Rng a(99), b(99);
    for (int i = 0; i < 10; ++i) CHECK(max_abs_diff(random_lorentz(a).m, random_lorentz(b).m) == 0.0);
}

TEST_CASE("minkowski product is invariant")
{
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        const FourVector x = testing::random_vector(rng);
        const FourVector y = testing::random_vector(rng);
        const double xy = mink_product(x, y);
        CHECK(std::abs(mink_product(l * x, l * y) - xy) < 1e-10 * (1.0 + std::abs(xy)));
    }
}

TEST_CASE("rotation about z")
{
    const LorentzMatrix r = rotation_z(M_PI / 2);
    const FourVector p = r * FourVector{1, 1, 0, 0};
    CHECK(std::abs(p.x()) < 1e-15);
    CHECK(std::abs(p.y() - 1.0) < 1e-15);
    CHECK(p.z() == 0.0);
}

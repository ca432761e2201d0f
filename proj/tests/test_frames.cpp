#include <cmath>

#include "doctest.h"
#include "lloca/errors.hpp"
#include "lloca/frame_ops.hpp"
#include "lloca/frames.hpp"
#include "support.hpp"

using namespace lloca;

namespace {

double det3(const Vec3& a, const Vec3& b, const Vec3& c)
{
    return a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

FourVector transform(const LorentzMatrix& l, const FourVector& v) { return l * v; }

} // namespace

TEST_CASE("gram_schmidt3 examples")
{
    const Triad t = gram_schmidt3({1, 0, 0}, {0, 2, 0});
    const Vec3 expected[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const Vec3* got[3] = {&t.u1, &t.u2, &t.u3};
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 3; ++c) CHECK(std::abs((*got[k])[c] - expected[k][c]) < 1e-14);

    const Triad s = gram_schmidt3({2, 0, 0}, {1, 1, 0});
    CHECK(std::abs(s.u2[0]) < 1e-15);
    CHECK(s.u2[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(gram_schmidt3({1, 2, 3}, {2, 4, 6}), DegenerateInput);
    CHECK_THROWS_AS(gram_schmidt3({0, 0, 0}, {1, 0, 0}), DegenerateInput);

    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        const Vec3 a{testing::normal(rng), testing::normal(rng), testing::normal(rng)};
        const Vec3 b{testing::normal(rng), testing::normal(rng), testing::normal(rng)};
        const Triad u = gram_schmidt3(a, b);
        const Vec3* e[3] = {&u.u1, &u.u2, &u.u3};
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) CHECK(std::abs(dot3(*e[p], *e[q]) - (p == q ? 1.0 : 0.0)) < 1e-12);
        CHECK(det3(u.u1, u.u2, u.u3) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("axis-aligned rest triple gives the identity frame")
{
    const FourVector v0{1, 0, 0, 0}, v1{0.5, 1, 0, 0}, v2{0.5, 0, 1, 0};
    CHECK(max_abs_diff(frame_pd(v0, v1, v2).L.m, Mat4::Identity()) < 1e-14);
    CHECK(max_abs_diff(frame_gs4(v0, v1, v2).L.m, Mat4::Identity()) < 1e-14);
    CHECK(max_abs_diff(frame_so3(v1, v2).L.m, Mat4::Identity()) < 1e-14);
}

TEST_CASE("levi-civita completion")
{
    // eps_{3012} = -1, so the lowered component is -1 and the raised one +1.
    const FourVector u3 = levi_civita_u3({1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0});
    CHECK(u3 == FourVector{0, 0, 0, 1});
    const FourVector flipped = levi_civita_u3({1, 0, 0, 0}, {0, 0, 1, 0}, {0, 1, 0, 0});
    CHECK(flipped == FourVector{0, 0, 0, -1});

    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        const FourVector u0 = l * FourVector{1, 0, 0, 0};
        const FourVector u1 = l * FourVector{0, 1, 0, 0};
        const FourVector u2 = l * FourVector{0, 0, 1, 0};
        const FourVector w = levi_civita_u3(u0, u1, u2);
        CHECK(std::abs(mink_product(w, w) + 1.0) < 1e-10);
        CHECK(std::abs(mink_product(w, u0)) < 1e-10);
        CHECK(std::abs(mink_product(w, u1)) < 1e-10);
        CHECK(std::abs(mink_product(w, u2)) < 1e-10);
    }
}

TEST_CASE("frame validity, agreement and equivariance")
{
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto [v0, v1, v2] = testing::random_triple(rng);
        const LocalFrame pd = frame_pd(v0, v1, v2);
        const LocalFrame gs = frame_gs4(v0, v1, v2);
        for (const LocalFrame* f : {&pd, &gs}) {
            CHECK(frame_metric_violation(*f) < 1e-10);
            CHECK(std::abs(f->L.det() - 1.0) < 1e-10);
            CHECK(f->L(0, 0) >= 1.0 - 1e-12);
        }
        CHECK(max_abs_diff(pd.L.m, gs.L.m) < 1e-6);

        const LorentzMatrix l = random_lorentz_max_speed(rng, 0.9);
        const LorentzMatrix linv = lorentz_inverse(l);
        const FourVector a = transform(l, v0), b = transform(l, v1), c = transform(l, v2);
        CHECK(max_abs_diff(frame_pd(a, b, c).L.m, (pd.L * linv).m) < 1e-8);
        CHECK(max_abs_diff(frame_gs4(a, b, c).L.m, (gs.L * linv).m) < 1e-8);
    }
}

TEST_CASE("frames reject bad input")
{
    CHECK_THROWS_AS(frame_pd({1, 2, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}), DomainError);
    CHECK_THROWS_AS(frame_gs4({-1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}), DomainError);
    CHECK_THROWS_AS(frame_pd({1, 0, 0, 0}, {0, 1, 0, 0}, {0, 2, 0, 0}), DegenerateInput);
    CHECK_THROWS_AS(frame_gs4({1, 0, 0, 0}, {0, 1, 0, 0}, {3, 2, 0, 0}), DegenerateInput);
    CHECK_THROWS_AS(frame_gs4({2, 1, 0, 0}, {4, 2, 0, 0}, {0, 0, 1, 0}), DegenerateInput);
    CHECK_THROWS_AS(frame_so3({0, 1, 1, 0}, {0, -2, -2, 0}), DegenerateInput);
}

TEST_CASE("rotation-only frames")
{
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        const FourVector v1 = testing::random_vector(rng), v2 = testing::random_vector(rng);
        const LocalFrame f = frame_so3(v1, v2);
        CHECK(f.L(0, 0) == 1.0);
        for (int k = 1; k < 4; ++k) {
            CHECK(f.L(0, k) == 0.0);
            CHECK(f.L(k, 0) == 0.0);
        }
        const LorentzMatrix r = random_rotation(rng);
        const LocalFrame g = frame_so3(r * v1, r * v2);
        CHECK(max_abs_diff(g.L.m, (f.L * lorentz_inverse(r)).m) < 1e-10);
    }
}

TEST_CASE("differentiable frames agree with the reference constructors")
{
    Rng rng(5);
    const int n = 200;
    ad::Tensor a(n, 4), b(n, 4), c(n, 4);
    std::vector<testing::Triple> triples;
    for (int i = 0; i < n; ++i) {
        triples.push_back(testing::random_triple(rng));
        for (int mu = 0; mu < 4; ++mu) {
            a(i, mu) = triples.back().v0[mu];
            b(i, mu) = triples.back().v1[mu];
            c(i, mu) = triples.back().v2[mu];
        }
    }
    for (FrameConstructor kind : {FrameConstructor::PD, FrameConstructor::GS4, FrameConstructor::SO3}) {
        ad::Tape t(false);
        const ad::Tensor out = build_frames(kind, t.constant(a), t.constant(b), t.constant(c)).value();
        for (int i = 0; i < n; ++i) {
            const auto& [v0, v1, v2] = triples[static_cast<std::size_t>(i)];
            const LocalFrame ref = kind == FrameConstructor::PD    ? frame_pd(v0, v1, v2)
                                   : kind == FrameConstructor::GS4 ? frame_gs4(v0, v1, v2)
                                                                   : frame_so3(v1, v2);
            CHECK(max_abs_diff(frame_row(out, i).m, ref.L.m) < 1e-13);
        }
    }
    CHECK(parse_frame_constructor("gs4") == FrameConstructor::GS4);
    CHECK(to_string(FrameConstructor::SO3) == "so3");
}

TEST_CASE("differentiable frames raise the same errors")
{
    ad::Tape t(false);
    ad::Tensor v0(1, 4), v1(1, 4), v2(1, 4);
    v0.data = {1, 2, 0, 0};
    v1.data = {0, 1, 0, 0};
    v2.data = {0, 0, 1, 0};
    CHECK_THROWS_AS(build_frames(FrameConstructor::PD, t.constant(v0), t.constant(v1), t.constant(v2)), DomainError);
    v0.data = {1, 0, 0, 0};
    v2.data = {0, 3, 0, 0};
    CHECK_THROWS_AS(build_frames(FrameConstructor::PD, t.constant(v0), t.constant(v1), t.constant(v2)),
                    DegenerateInput);
    CHECK_THROWS_AS(build_frames(FrameConstructor::GS4, t.constant(v0), t.constant(v1), t.constant(v2)),
                    DegenerateInput);
}

#include "lloca/frames.hpp"

#include <algorithm>
#include <cmath>

#include "lloca/errors.hpp"

namespace lloca {

namespace {

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross3(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

FourVector norm4(const FourVector& v) { return (1.0 / (mink_norm(v) + kNormEps)) * v; }

// Spatial magnitude of a in the rest frame of the unit timelike u0.
double transverse_size(const FourVector& a, const FourVector& u0)
{
    const double au = mink_product(a, u0);
    return std::sqrt(std::max(au * au - mink_product(a, a), 0.0));
}

// +1 / -1 for even / odd permutations of (0,1,2,3), 0 if an index repeats.
int permutation_sign(int a, int b, int c, int d)
{
    const int p[4] = {a, b, c, d};
    int inversions = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            if (p[i] == p[j]) return 0;
            if (p[i] > p[j]) ++inversions;
        }
    return inversions % 2 == 0 ? 1 : -1;
}

void require_timelike(const FourVector& v0)
{
    if (!v0.finite() || !(mink_product(v0, v0) > 0.0) || !(v0.t() > 0.0))
        throw DomainError("frame construction: v0 must be timelike and future-directed");
}

} // namespace

Triad gram_schmidt3(const Vec3& w1, const Vec3& w2)
{
    const double n1 = std::sqrt(dot3(w1, w1));
    const double n2 = std::sqrt(dot3(w2, w2));
    if (!(n1 > 0.0) || !std::isfinite(n1)) throw DegenerateInput("gram_schmidt3: first vector vanishes");
    const Vec3 u1 = scaled(w1, 1.0 / (n1 + kNormEps));
    const double proj = dot3(w2, u1);
    const Vec3 r{w2[0] - u1[0] * proj, w2[1] - u1[1] * proj, w2[2] - u1[2] * proj};
    const double nr = std::sqrt(dot3(r, r));
    if (!(nr > kCollinearityTol * n2)) throw DegenerateInput("gram_schmidt3: vectors are collinear");
    const Vec3 u2 = scaled(r, 1.0 / (nr + kNormEps));
    return {u1, u2, cross3(u1, u2)};
}

LocalFrame frame_pd(const FourVector& v0, const FourVector& v1, const FourVector& v2)
{
    require_timelike(v0);
    const LorentzMatrix boost = boost_from_vector(v0);
    const Triad t = gram_schmidt3((boost * v1).spatial(), (boost * v2).spatial());
    const LorentzMatrix rot = rotation_from_matrix({
        t.u1[0], t.u1[1], t.u1[2],
        t.u2[0], t.u2[1], t.u2[2],
        t.u3[0], t.u3[1], t.u3[2],
    });
    return {rot * boost};
}

FourVector levi_civita_u3(const FourVector& u0, const FourVector& u1, const FourVector& u2)
{
    FourVector lower;
    for (int nu = 0; nu < 4; ++nu) {
        double acc = 0.0;
        for (int r = 0; r < 4; ++r)
            for (int s = 0; s < 4; ++s)
                for (int k = 0; k < 4; ++k) {
                    const int sign = permutation_sign(nu, r, s, k);
                    if (sign != 0) acc += sign * u0[r] * u1[s] * u2[k];
                }
        lower[nu] = acc;
    }
    return {lower[0], -lower[1], -lower[2], -lower[3]};
}

LocalFrame frame_gs4(const FourVector& v0, const FourVector& v1, const FourVector& v2)
{
    require_timelike(v0);
    const FourVector a0 = norm4(v0);
    const FourVector a1 = norm4(v1);
    const FourVector a2 = norm4(v2);
    const FourVector u0 = a0;

    const FourVector r1 = a1 - (mink_product(a1, u0) / mink_product(u0, u0)) * u0;
    if (!(mink_norm(r1) > kCollinearityTol * transverse_size(a1, u0)) || !(transverse_size(a1, u0) > 0.0))
        throw DegenerateInput("frame_gs4: v1 is parallel to v0");
    const FourVector u1 = norm4(r1);

    const FourVector r2 = a2 - (mink_product(a2, u0) / mink_product(u0, u0)) * u0 -
                          (mink_product(a2, u1) / mink_product(u1, u1)) * u1;
    if (!(mink_norm(r2) > kCollinearityTol * transverse_size(a2, u0)))
        throw DegenerateInput("frame_gs4: v2 lies in the span of v0 and v1");
    const FourVector u2 = norm4(r2);

    FourVector u3 = levi_civita_u3(u0, u1, u2);
    u3 = (1.0 / mink_norm(u3)) * u3;

    // Row a is g_aa * u_a^T g, so the spatial rows flip sign relative to u^T g.
    // This makes the rest-frame triple map to the identity and det L = +1.
    const FourVector* u[4] = {&u0, &u1, &u2, &u3};
    Mat4 l;
    for (int a = 0; a < 4; ++a) {
        const double ga = a == 0 ? 1.0 : -1.0;
        for (int mu = 0; mu < 4; ++mu) {
            const double gmu = mu == 0 ? 1.0 : -1.0;
            l(a, mu) = ga * gmu * (*u[a])[mu];
        }
    }
    return {LorentzMatrix(l)};
}

LocalFrame frame_so3(const FourVector& v1, const FourVector& v2)
{
    const Triad t = gram_schmidt3(v1.spatial(), v2.spatial());
    return {rotation_from_matrix({
        t.u1[0], t.u1[1], t.u1[2],
        t.u2[0], t.u2[1], t.u2[2],
        t.u3[0], t.u3[1], t.u3[2],
    })};
}

double frame_metric_violation(const LocalFrame& f)
{
    const Mat4& g = metric();
    return max_abs_diff(f.L.m * g * f.L.m.transpose(), g);
}

} // namespace lloca

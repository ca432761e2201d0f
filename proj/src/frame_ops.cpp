#include "lloca/frame_ops.hpp"

#include <cmath>

#include "lloca/errors.hpp"
#include "lloca/ops.hpp"

namespace lloca {

namespace {

using ad::Tensor;
using ad::Var;

double norm3(const double* v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double mink(const double* a, const double* b) { return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]; }

void require_timelike(const Tensor& v0)
{
    for (int i = 0; i < v0.rows; ++i) {
        const double* p = v0.row(i);
        if (!std::isfinite(p[0]) || !(mink(p, p) > 0.0) || !(p[0] > 0.0))
            throw DomainError("frame construction: v0 must be timelike and future-directed");
    }
}

Var normalize3(Var x)
{
    return x / ad::add_scalar(ad::sqrt(ad::sum_cols(x * x)), kNormEps);
}

// Rows of the rotation diag(1, R~) with R~ = (u1, u2, u3)^T from two spatial (r,3) inputs.
Var gram_schmidt_rotation(Var w1, Var w2)
{
    const Tensor& a = w1.value();
    const Tensor& b = w2.value();
    for (int i = 0; i < a.rows; ++i) {
        const double n1 = norm3(a.row(i));
        if (!(n1 > 0.0) || !std::isfinite(n1)) throw DegenerateInput("gram_schmidt3: first vector vanishes");
        const double* v = b.row(i);
        double u[3], r[3];
        for (int k = 0; k < 3; ++k) u[k] = a(i, k) / n1;
        const double proj = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        for (int k = 0; k < 3; ++k) r[k] = v[k] - u[k] * proj;
        if (!(norm3(r) > kCollinearityTol * norm3(v))) throw DegenerateInput("gram_schmidt3: vectors are collinear");
    }
    Var u1 = normalize3(w1);
    Var u2 = normalize3(w2 - u1 * ad::sum_cols(w2 * u1));
    Var u3 = ad::cross_product(u1, u2);
    ad::Tape& t = *w1.tape;
    Var one = t.constant(Tensor(a.rows, 1, 1.0));
    Var zero = t.constant(Tensor(a.rows, 1, 0.0));
    return ad::concat_cols({one, zero, zero, zero, zero, u1, zero, u2, zero, u3});
}

Var frames_pd(Var v0, Var v1, Var v2)
{
    require_timelike(v0.value());
    Var b = ad::boost_assembly(v0);
    Var w1 = ad::slice_cols(ad::bmv4(b, v1), 1, 3);
    Var w2 = ad::slice_cols(ad::bmv4(b, v2), 1, 3);
    return ad::bmm4(gram_schmidt_rotation(w1, w2), b);
}

Var mink_col(Var a, Var b) { return ad::mink_product(a, b); }

Var normalize4(Var v) { return v / ad::add_scalar(ad::sqrt(ad::abs(mink_col(v, v))), kNormEps); }

// Spatial size of a in the rest frame of the unit timelike u0, per row.
double transverse(const double* a, const double* u0)
{
    const double au = mink(a, u0);
    return std::sqrt(std::max(au * au - mink(a, a), 0.0));
}

Var frames_gs4(Var v0, Var v1, Var v2)
{
    require_timelike(v0.value());
    ad::Tape& t = *v0.tape;
    Var u0 = normalize4(v0);
    Var a1 = normalize4(v1);
    Var a2 = normalize4(v2);
    Var r1 = a1 - u0 * (mink_col(a1, u0) / mink_col(u0, u0));
    {
        const Tensor& ra = r1.value();
        const Tensor& aa = a1.value();
        const Tensor& ua = u0.value();
        for (int i = 0; i < ra.rows; ++i) {
            const double ts = transverse(aa.row(i), ua.row(i));
            const double n = std::sqrt(std::abs(mink(ra.row(i), ra.row(i))));
            if (!(n > kCollinearityTol * ts) || !(ts > 0.0)) throw DegenerateInput("frame_gs4: v1 is parallel to v0");
        }
    }
    Var u1 = normalize4(r1);
    Var r2 = a2 - u0 * (mink_col(a2, u0) / mink_col(u0, u0)) - u1 * (mink_col(a2, u1) / mink_col(u1, u1));
    {
        const Tensor& ra = r2.value();
        const Tensor& aa = a2.value();
        const Tensor& ua = u0.value();
        for (int i = 0; i < ra.rows; ++i) {
            const double n = std::sqrt(std::abs(mink(ra.row(i), ra.row(i))));
            if (!(n > kCollinearityTol * transverse(aa.row(i), ua.row(i))))
                throw DegenerateInput("frame_gs4: v2 lies in the span of v0 and v1");
        }
    }
    Var u2 = normalize4(r2);
    Var u3 = ad::levi_civita(u0, u1, u2);
    u3 = u3 / ad::sqrt(ad::abs(mink_col(u3, u3)));
    Var time_row = t.constant(Tensor(1, 4, {1.0, -1.0, -1.0, -1.0}));
    Var space_row = t.constant(Tensor(1, 4, {-1.0, 1.0, 1.0, 1.0}));
    return ad::concat_cols({u0 * time_row, u1 * space_row, u2 * space_row, u3 * space_row});
}

Var frames_so3(Var v1, Var v2)
{
    return gram_schmidt_rotation(ad::slice_cols(v1, 1, 3), ad::slice_cols(v2, 1, 3));
}

} // namespace

FrameConstructor parse_frame_constructor(std::string_view name)
{
    if (name == "pd") return FrameConstructor::PD;
    if (name == "gs4") return FrameConstructor::GS4;
    if (name == "so3") return FrameConstructor::SO3;
    throw ConfigError("unknown frame constructor '" + std::string(name) + "'");
}

std::string to_string(FrameConstructor c)
{
    switch (c) {
    case FrameConstructor::PD: return "pd";
    case FrameConstructor::GS4: return "gs4";
    case FrameConstructor::SO3: return "so3";
    }
    return "?";
}

ad::Var build_frames(FrameConstructor c, ad::Var v0, ad::Var v1, ad::Var v2)
{
    switch (c) {
    case FrameConstructor::PD: return frames_pd(v0, v1, v2);
    case FrameConstructor::GS4: return frames_gs4(v0, v1, v2);
    case FrameConstructor::SO3: return frames_so3(v1, v2);
    }
    throw ConfigError("unknown frame constructor");
}

ad::Tensor identity_frames(int rows)
{
    Tensor t(rows, 16);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < 4; ++k) t(i, 5 * k) = 1.0;
    return t;
}

ad::Tensor frames_to_tensor(std::span<const LorentzMatrix> frames)
{
    Tensor t(static_cast<int>(frames.size()), 16);
    for (int i = 0; i < t.rows; ++i)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) t(i, 4 * r + c) = frames[static_cast<std::size_t>(i)](r, c);
    return t;
}

LorentzMatrix frame_row(const ad::Tensor& frames, int row)
{
    return LorentzMatrix(Mat4(Eigen::Map<const Mat4>(frames.row(row))));
}

} // namespace lloca

#include "lloca/minkowski.hpp"

#include <cmath>
#include <ostream>

#include "lloca/errors.hpp"

namespace lloca {

bool FourVector::finite() const
{
    for (double v : c)
        if (!std::isfinite(v)) return false;
    return true;
}

FourVector& FourVector::operator+=(const FourVector& o)
{
    for (int i = 0; i < 4; ++i) c[i] += o.c[i];
    return *this;
}

FourVector& FourVector::operator-=(const FourVector& o)
{
    for (int i = 0; i < 4; ++i) c[i] -= o.c[i];
    return *this;
}

FourVector operator*(double s, FourVector a)
{
    for (double& v : a.c) v *= s;
    return a;
}

std::ostream& operator<<(std::ostream& os, const FourVector& p)
{
    return os << '(' << p.c[0] << ", " << p.c[1] << ", " << p.c[2] << ", " << p.c[3] << ')';
}

FourVector LorentzMatrix::operator*(const FourVector& p) const
{
    FourVector out;
    for (int r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += m(r, k) * p.c[k];
        out.c[r] = acc;
    }
    return out;
}

const Mat4& metric()
{
    static const Mat4 g = Eigen::Vector4d(1.0, -1.0, -1.0, -1.0).asDiagonal();
    return g;
}

double mink_product(const FourVector& a, const FourVector& b)
{
    return a.c[0] * b.c[0] - a.c[1] * b.c[1] - a.c[2] * b.c[2] - a.c[3] * b.c[3];
}

double mink_norm(const FourVector& x)
{
    return std::sqrt(std::abs(mink_product(x, x)));
}

LorentzMatrix boost_from_vector(const FourVector& p)
{
    const double m2 = mink_product(p, p);
    if (!(m2 > 0.0) || !(p.t() > 0.0))
        throw DomainError("boost_from_vector: vector must be timelike and future-directed");
    const double m = std::sqrt(m2);
    // I + (gamma-1) bb^T/b^2 == I + p p^T / (m (p0 + m)), which stays finite as p_vec -> 0
    const double k = 1.0 / (m * (p.t() + m));
    Mat4 b;
    b(0, 0) = p.t() / m;
    for (int i = 1; i < 4; ++i) {
        b(0, i) = -p.c[i] / m;
        b(i, 0) = -p.c[i] / m;
        for (int j = 1; j < 4; ++j)
            b(i, j) = (i == j ? 1.0 : 0.0) + k * p.c[i] * p.c[j];
    }
    return LorentzMatrix(b);
}

LorentzMatrix boost_from_velocity(const Vec3& beta)
{
    const double b2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
    if (!(b2 < 1.0)) throw DomainError("boost_from_velocity: |beta| must be < 1");
    const double gamma = 1.0 / std::sqrt(1.0 - b2);
    const double k = gamma * gamma / (gamma + 1.0);
    Mat4 b;
    b(0, 0) = gamma;
    for (int i = 1; i < 4; ++i) {
        b(0, i) = -gamma * beta[i - 1];
        b(i, 0) = -gamma * beta[i - 1];
        for (int j = 1; j < 4; ++j)
            b(i, j) = (i == j ? 1.0 : 0.0) + k * beta[i - 1] * beta[j - 1];
    }
    return LorentzMatrix(b);
}

LorentzMatrix rotation_from_matrix(const std::array<double, 9>& r)
{
    Mat4 out = Mat4::Identity();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(i + 1, j + 1) = r[3 * i + j];
    return LorentzMatrix(out);
}

bool is_lorentz(const LorentzMatrix& lambda, double tol)
{
    const Mat4 d = lambda.m.transpose() * metric() * lambda.m - metric();
    return d.cwiseAbs().maxCoeff() <= tol;
}

LorentzMatrix lorentz_inverse(const LorentzMatrix& lambda)
{
    const Mat4& g = metric();
    return LorentzMatrix(Mat4(g * lambda.m.transpose() * g));
}

double max_abs_diff(const Mat4& a, const Mat4& b)
{
    return (a - b).cwiseAbs().maxCoeff();
}

LorentzMatrix random_rotation(Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    double q[4];
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (double& v : q) {
            v = normal(rng);
            n2 += v * v;
        }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
    return rotation_from_matrix({
        1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
        2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
        2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y),
    });
}

LorentzMatrix random_boost(Rng& rng, double sigma, double clip)
{
    if (!(sigma >= 0.0) || !(clip > 0.0))
        throw DomainError("random_boost: sigma must be >= 0 and clip > 0");
    if (sigma == 0.0) return LorentzMatrix::identity();
    std::normal_distribution<double> normal(0.0, sigma);
    const double bound = clip * sigma;
    Vec3 beta{};
    for (;;) {
        for (double& b : beta) {
            do {
                b = normal(rng);
            } while (std::abs(b) > bound);
        }
        const double b2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
        if (b2 < 0.99 * 0.99) break;
    }
    return boost_from_velocity(beta);
}

LorentzMatrix random_lorentz(Rng& rng, double sigma, double clip)
{
    const LorentzMatrix r = random_rotation(rng);
    return r * random_boost(rng, sigma, clip);
}

LorentzMatrix random_lorentz_max_speed(Rng& rng, double max_speed)
{
    if (!(max_speed >= 0.0 && max_speed < 1.0))
        throw DomainError("random_lorentz_max_speed: max_speed must be in [0, 1)");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, max_speed);
    Vec3 n{};
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (double& v : n) {
            v = normal(rng);
            n2 += v * v;
        }
    } while (n2 < 1e-12);
    const double speed = uniform(rng) / std::sqrt(n2);
    const LorentzMatrix r = random_rotation(rng);
    return r * boost_from_velocity({n[0] * speed, n[1] * speed, n[2] * speed});
}

LorentzMatrix rotation_z(double phi)
{
    const double c = std::cos(phi), s = std::sin(phi);
    return rotation_from_matrix({c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0});
}

} // namespace lloca

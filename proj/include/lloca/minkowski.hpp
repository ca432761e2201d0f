#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>

#include <Eigen/Core>
#include <Eigen/LU>

namespace lloca {

using Rng = std::mt19937_64;
using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;
using Vec3 = std::array<double, 3>;

/// Spacetime point or momentum in (+,-,-,-) signature. Index 0 is time/energy.
struct FourVector {
    std::array<double, 4> c{0.0, 0.0, 0.0, 0.0};

    FourVector() = default;
    FourVector(double t, double x, double y, double z) : c{t, x, y, z} {}

    double t() const { return c[0]; }
    double x() const { return c[1]; }
    double y() const { return c[2]; }
    double z() const { return c[3]; }
    double& operator[](std::size_t i) { return c[i]; }
    double operator[](std::size_t i) const { return c[i]; }

    Vec3 spatial() const { return {c[1], c[2], c[3]}; }
    bool finite() const;

    FourVector& operator+=(const FourVector& o);
    FourVector& operator-=(const FourVector& o);
    friend FourVector operator+(FourVector a, const FourVector& b) { return a += b; }
    friend FourVector operator-(FourVector a, const FourVector& b) { return a -= b; }
    friend FourVector operator*(double s, FourVector a);
    friend bool operator==(const FourVector&, const FourVector&) = default;
};

std::ostream& operator<<(std::ostream& os, const FourVector& p);

/// A 4x4 real matrix meant to satisfy m^T g m = g. Validity is not enforced
/// on construction; see is_lorentz().
struct LorentzMatrix {
    Mat4 m = Mat4::Identity();

    LorentzMatrix() = default;
    explicit LorentzMatrix(const Mat4& mat) : m(mat) {}

    static LorentzMatrix identity() { return LorentzMatrix{}; }

    double operator()(int r, int c) const { return m(r, c); }
    FourVector operator*(const FourVector& p) const;
    LorentzMatrix operator*(const LorentzMatrix& o) const { return LorentzMatrix(Mat4(m * o.m)); }
    double det() const { return m.determinant(); }
};

/// diag(1,-1,-1,-1)
const Mat4& metric();

double mink_product(const FourVector& a, const FourVector& b);

/// sqrt(|<x,x>|)
double mink_norm(const FourVector& x);

/// Rest-frame boost B(p) with velocity p_vec/p0. Throws DomainError unless
/// <p,p> > 0 and p0 > 0.
LorentzMatrix boost_from_vector(const FourVector& p);

/// Boost with velocity beta (|beta| < 1); B(beta) maps (gamma, gamma*beta) to rest.
LorentzMatrix boost_from_velocity(const Vec3& beta);

/// Embeds a 3x3 rotation (row-major) into the spatial block.
LorentzMatrix rotation_from_matrix(const std::array<double, 9>& r);

bool is_lorentz(const LorentzMatrix& lambda, double tol);

/// g Lambda^T g
LorentzMatrix lorentz_inverse(const LorentzMatrix& lambda);

/// Max entrywise |a - b|.
double max_abs_diff(const Mat4& a, const Mat4& b);

/// Uniform random rotation from a normalised 4D Gaussian quaternion.
LorentzMatrix random_rotation(Rng& rng);

/// Boost whose velocity components are N(0, sigma) truncated at clip*sigma.
/// Draws with |beta| >= 0.99 are resampled. sigma == 0 gives the identity.
LorentzMatrix random_boost(Rng& rng, double sigma = 0.1, double clip = 3.0);

/// random_rotation() * random_boost(sigma, clip)
LorentzMatrix random_lorentz(Rng& rng, double sigma = 0.1, double clip = 3.0);

/// Rotation times a boost with isotropic direction and speed uniform in [0, max_speed].
/// Used by the property checks that quantify "|beta| <= 0.9".
LorentzMatrix random_lorentz_max_speed(Rng& rng, double max_speed);

/// Rotation about the z axis by angle phi.
LorentzMatrix rotation_z(double phi);

} // namespace lloca

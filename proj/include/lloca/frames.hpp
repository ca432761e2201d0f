#pragma once

#include <array>

#include "lloca/minkowski.hpp"

namespace lloca {

/// Local reference frame. Rows are the covectors of a Minkowski-orthonormal
/// vierbein; under a global transformation lambda the frame becomes L lambda^-1.
struct LocalFrame {
    LorentzMatrix L;
};

/// Relative collinearity threshold shared by all frame constructors.
inline constexpr double kCollinearityTol = 1e-10;

/// Regulariser in norm(v) = v / (|v| + eps).
inline constexpr double kNormEps = 1e-15;

struct Triad {
    Vec3 u1, u2, u3;
};

/// Right-handed orthonormal triad from two spatial vectors.
/// Throws DegenerateInput if w1 vanishes or w2 is collinear with w1.
Triad gram_schmidt3(const Vec3& w1, const Vec3& w2);

/// Polar-decomposition frame: L = R(B(v0) v1, B(v0) v2) * B(v0).
LocalFrame frame_pd(const FourVector& v0, const FourVector& v1, const FourVector& v2);

/// Minkowski Gram-Schmidt frame. Agrees with frame_pd on admissible input.
LocalFrame frame_gs4(const FourVector& v0, const FourVector& v1, const FourVector& v2);

/// Pure rotation frame (v0 fixed to the time direction).
LocalFrame frame_so3(const FourVector& v1, const FourVector& v2);

/// u3^mu = g^{mu nu} eps_{nu rho sigma kappa} u0^rho u1^sigma u2^kappa with eps_{0123} = +1.
FourVector levi_civita_u3(const FourVector& u0, const FourVector& u1, const FourVector& u2);

/// Checks on the frame invariants; each returns the worst violation.
double frame_metric_violation(const LocalFrame& f); // max |L g L^T - g|

} // namespace lloca

#pragma once

#include <Eigen/Dense>

namespace cospeech {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Two raw 3-vectors; orthonormality is not required.
struct Rot6D {
    Vec3 a1 = Vec3::UnitX();
    Vec3 a2 = Vec3::UnitY();
};

inline constexpr double kRot6dEps = 1e-8;

/// Gram-Schmidt: columns b1 = a1/|a1|, b2 = unit(a2 - (b1.a2) b1), b3 = b1 x b2.
/// Throws DegenerateInput when either norm is below kRot6dEps.
Mat3 matrix_from_rot6d(const Rot6D& r);
/// First two columns.
Rot6D rot6d_from_matrix(const Mat3& m);

struct EulerXYZ {
    Vec3 degrees = Vec3::Zero();
    /// |m(0,2)| > 1 - 1e-6; the third angle was fixed to 0.
    bool gimbal_lock = false;
};

/// Intrinsic x-y-z angles: m = Rx(a) * Ry(b) * Rz(c).
EulerXYZ euler_xyz_from_matrix(const Mat3& m);
Mat3 matrix_from_euler_xyz(const Vec3& degrees);

/// Angle of m_a^T m_b in radians, in [0, pi].
double geodesic_angle(const Mat3& a, const Mat3& b);
/// Nearest rotation in the Frobenius sense (SVD with determinant correction).
Mat3 project_to_rotation(const Mat3& m);

}  // namespace cospeech

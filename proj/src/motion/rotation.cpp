#include "cospeech/motion/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cospeech/errors.hpp"

namespace cospeech {

namespace {
constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr double kGimbal = 1.0 - 1e-6;
}  // namespace

Mat3 matrix_from_rot6d(const Rot6D& r) {
    if (!r.a1.allFinite() || !r.a2.allFinite()) throw DegenerateInput("non-finite 6D rotation");
    const double n1 = r.a1.norm();
    if (n1 < kRot6dEps) throw DegenerateInput("first 6D column has near-zero norm");
    const Vec3 b1 = r.a1 / n1;
    const Vec3 resid = r.a2 - b1.dot(r.a2) * b1;
    const double n2 = resid.norm();
    if (n2 < kRot6dEps) throw DegenerateInput("second 6D column is parallel to the first");
    const Vec3 b2 = resid / n2;
    Mat3 m;
    m.col(0) = b1;
    m.col(1) = b2;
    m.col(2) = b1.cross(b2);
    return m;
}

Rot6D rot6d_from_matrix(const Mat3& m) { return {m.col(0), m.col(1)}; }

EulerXYZ euler_xyz_from_matrix(const Mat3& m) {
    EulerXYZ e;
    const double s = std::clamp(m(0, 2), -1.0, 1.0);
    const double b = std::asin(s);
    double a = 0.0, c = 0.0;
    if (std::abs(m(0, 2)) > kGimbal) {
        e.gimbal_lock = true;
        // With c = 0, the remaining a (or a - c) is read from the second column.
        a = std::atan2(m(2, 1), m(1, 1));
    } else {
        a = std::atan2(-m(1, 2), m(2, 2));
        c = std::atan2(-m(0, 1), m(0, 0));
    }
    e.degrees = Vec3(a, b, c) * kDeg;
    return e;
}

Mat3 matrix_from_euler_xyz(const Vec3& degrees) {
    const Vec3 r = degrees / kDeg;
    return (Eigen::AngleAxisd(r.x(), Vec3::UnitX()) * Eigen::AngleAxisd(r.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(r.z(), Vec3::UnitZ()))
        .toRotationMatrix();
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

Mat3 project_to_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace cospeech

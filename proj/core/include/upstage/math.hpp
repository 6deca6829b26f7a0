#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace upstage {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDeg = kPi / 180.0;
inline constexpr double kG0 = 9.80665;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

inline bool is_symmetric(const Mat3& m, double tol = 1e-12) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

/// Symmetric positive definite check by Cholesky.
inline bool is_spd(const Mat3& m) {
    if (!is_symmetric(m, 1e-9)) return false;
    Eigen::LLT<Mat3> llt(m);
    return llt.info() == Eigen::Success;
}

/// Point-mass inertia m (|r|^2 I - r r^T) about the origin.
inline Mat3 point_mass_inertia(double m, const Vec3& r) {
    return m * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
}

/// Angle between two nonzero vectors, radians, robust near 0 and pi.
inline double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace upstage

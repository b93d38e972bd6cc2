#ifndef EVROT_GEOMETRY_HPP
#define EVROT_GEOMETRY_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

#include "evrot/errors.hpp"

namespace evrot {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Per-entry tolerance for RᵀR = I and det(R) = 1.
inline constexpr double kRotationTol = 1e-9;

/// Skew-symmetric matrix of v: hat(v) * w == v.cross(w).
inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

/// Inverse of hat for a skew-symmetric matrix.
inline Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

inline bool is_rotation(const Mat3& r, double tol = kRotationTol) {
  const Mat3 err = r.transpose() * r - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// Rodrigues rotation by angle ‖v‖ about v/‖v‖; exp_map(0) = I.
/// Taylor fallback below 1e-8 avoids dividing by the sine of a tiny angle.
inline Mat3 exp_map(const Vec3& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 k = hat(v);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * k * k;
}

/// Logarithm map SO(3) -> so(3) with ‖result‖ in [0, π].
/// Goes through the unit quaternion, which is well conditioned at both the
/// small-angle and the π singularities of the closed-form trace formula.
inline Vec3 log_map(const Mat3& r) {
  if (!is_rotation(r)) {
    throw DomainError("log_map: input violates rotation orthonormality tolerance");
  }
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  if (n < 1e-9) {
    return 2.0 * q.vec();
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * q.vec();
}

/// Minimal rotation angle between two orientations: ‖log(R1ᵀ R2)‖.
inline double geodesic_angle(const Mat3& r1, const Mat3& r2) {
  return log_map(Mat3(r1.transpose() * r2)).norm();
}

/// Right Jacobian of SO(3): d/dt exp(θ(t)) = exp(θ) · hat(Jr(θ) θ̇).
inline Mat3 right_jacobian(const Vec3& v) {
  const double theta2 = v.squaredNorm();
  const Mat3 k = hat(v);
  if (theta2 < 1e-10) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() - ((1.0 - std::cos(theta)) / theta2) * k +
         ((theta - std::sin(theta)) / (theta2 * theta)) * k * k;
}

/// Nearest rotation matrix in the Frobenius sense (polar factor via SVD).
/// Never applied implicitly; callers must opt in.
inline Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 d = Mat3::Identity();
    d(2, 2) = -1.0;
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace evrot

#endif  // EVROT_GEOMETRY_HPP

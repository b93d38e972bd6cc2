#ifndef EVROT_CAMERA_HPP
#define EVROT_CAMERA_HPP

#include <cmath>
#include <string>

#include "evrot/errors.hpp"
#include "evrot/geometry.hpp"

namespace evrot {

/// Pinhole camera with Brown-Conrady radial-tangential distortion
/// (k1, k2, p1, p2, k3).
struct CameraModel {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0, p1 = 0.0, p2 = 0.0, k3 = 0.0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.0)) throw ConfigError("camera: fx must be > 0");
    if (!(fy > 0.0)) throw ConfigError("camera: fy must be > 0");
    if (width <= 0) throw ConfigError("camera: width must be > 0");
    if (height <= 0) throw ConfigError("camera: height must be > 0");
  }

  Vec2 pixel_to_normalized(const Vec2& px) const {
    return Vec2((px.x() - cx) / fx, (px.y() - cy) / fy);
  }
  Vec2 normalized_to_pixel(const Vec2& n) const {
    return Vec2(fx * n.x() + cx, fy * n.y() + cy);
  }
};

/// Applies the forward distortion model to normalized image coordinates.
inline Vec2 distort_normalized(const CameraModel& m, const Vec2& n) {
  const double x = n.x(), y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (m.k1 + r2 * (m.k2 + r2 * m.k3));
  return Vec2(x * radial + 2.0 * m.p1 * x * y + m.p2 * (r2 + 2.0 * x * x),
              y * radial + m.p1 * (r2 + 2.0 * y * y) + 2.0 * m.p2 * x * y);
}

inline constexpr int kUndistortMaxIterations = 50;
inline constexpr double kUndistortTol = 1e-10;  // in normalized coordinates

/// Inverts the distortion model by damped fixed-point iteration.
inline Vec2 undistort_normalized(const CameraModel& m, const Vec2& distorted) {
  Vec2 x = distorted;
  Vec2 res = distort_normalized(m, x) - distorted;
  double lambda = 1.0;
  for (int it = 0; it < kUndistortMaxIterations; ++it) {
    if (res.norm() < kUndistortTol) return x;
    const Vec2 cand = x - lambda * res;
    const Vec2 cand_res = distort_normalized(m, cand) - distorted;
    if (cand_res.norm() < res.norm()) {
      x = cand;
      res = cand_res;
      lambda = std::min(1.0, lambda * 1.5);
    } else {
      lambda *= 0.5;
    }
  }
  if (res.norm() < kUndistortTol) return x;
  throw ConvergenceError("undistort: fixed-point iteration did not reach tolerance");
}

/// Pixel-level undistortion x^u = f⁻¹(x^I): the result reproduces the input
/// under the forward model within the fixed-point tolerance.
inline Vec2 undistort(const CameraModel& m, const Vec2& pixel) {
  return m.normalized_to_pixel(undistort_normalized(m, m.pixel_to_normalized(pixel)));
}

/// Projects a pixel to its unit-sphere direction: undistort, normalize by K,
/// lift to (x, y, 1) and scale to unit norm. Result always has z > 0.
inline Vec3 pixel_to_sphere(const CameraModel& m, const Vec2& pixel) {
  const Vec2 n = undistort_normalized(m, m.pixel_to_normalized(pixel));
  Vec3 p(n.x(), n.y(), 1.0);
  return p / p.norm();
}

/// Forward projection with distortion applied. Requires p.z > 0.
inline Vec2 sphere_to_pixel(const CameraModel& m, const Vec3& p) {
  if (!(p.z() > 0.0)) {
    throw DomainError("sphere_to_pixel: point is behind the camera (z <= 0)");
  }
  const Vec2 n(p.x() / p.z(), p.y() / p.z());
  return m.normalized_to_pixel(distort_normalized(m, n));
}

}  // namespace evrot

#endif  // EVROT_CAMERA_HPP

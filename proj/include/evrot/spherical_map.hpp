#ifndef EVROT_SPHERICAL_MAP_HPP
#define EVROT_SPHERICAL_MAP_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evrot/errors.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"
#include "evrot/kd_tree.hpp"

namespace evrot {

struct MapConfig {
  double theta_t = 0.0087;   // keyframe rotation threshold, rad (~0.5 deg)
  double voxel_size = 0.004; // cubic grid edge in embedded R^3

  void validate() const {
    if (!(theta_t > 0.0)) throw ConfigError("theta_t: must be > 0");
    if (!(voxel_size > 0.0 && voxel_size < 2.0))
      throw ConfigError("voxel_size: must be in (0, 2)");
  }
};

/// Keyframe gate: true iff the rotation since the last keyframe strictly
/// exceeds theta_t.
inline bool is_keyframe(const Mat3& r_current, const Mat3& r_last_keyframe,
                        double theta_t) {
  return log_map(Mat3(r_current * r_last_keyframe.transpose())).norm() > theta_t;
}

namespace detail {

inline std::uint64_t voxel_key(const Vec3& p, double inv_voxel) {
  // 21 bits per axis, offset-biased. Unit vectors stay well inside range for
  // any voxel_size >= 2^-19.
  const auto cell = [inv_voxel](double x) {
    return static_cast<std::uint64_t>(
        static_cast<std::int64_t>(std::floor(x * inv_voxel)) + (1 << 20));
  };
  return (cell(p.x()) << 42) | (cell(p.y()) << 21) | cell(p.z());
}

}  // namespace detail

struct VoxelDownsampleResult {
  std::vector<Vec3> points;
  std::size_t dropped_cancelled = 0;  // buckets whose centroid norm was < 1e-6
};

/// Buckets unit vectors into a cubic grid of edge voxel_size, replaces each
/// occupied bucket by its re-normalized centroid. Output order follows first
/// occupancy of each bucket, so results are deterministic for a given input
/// order. Buckets cancelled by antipodal points are dropped and counted.
inline VoxelDownsampleResult voxel_downsample_counted(std::span<const Vec3> points,
                                                      double voxel_size) {
  struct Bucket {
    Vec3 sum;
    std::uint32_t count;
  };
  const double inv_voxel = 1.0 / voxel_size;
  std::unordered_map<std::uint64_t, std::uint32_t> bucket_of;
  bucket_of.reserve(points.size() * 2);
  std::vector<Bucket> buckets;
  buckets.reserve(points.size());
  for (const Vec3& p : points) {
    const std::uint64_t key = detail::voxel_key(p, inv_voxel);
    auto [it, inserted] = bucket_of.try_emplace(key, static_cast<std::uint32_t>(buckets.size()));
    if (inserted) {
      buckets.push_back(Bucket{p, 1});
    } else {
      Bucket& b = buckets[it->second];
      b.sum += p;
      b.count += 1;
    }
  }
  VoxelDownsampleResult out;
  out.points.reserve(buckets.size());
  for (const Bucket& b : buckets) {
    const Vec3 centroid = b.sum / double(b.count);
    const double norm = centroid.norm();
    if (norm < 1e-6) {
      ++out.dropped_cancelled;
      continue;
    }
    out.points.push_back(centroid / norm);
  }
  return out;
}

inline std::vector<Vec3> voxel_downsample(std::span<const Vec3> points, double voxel_size) {
  return voxel_downsample_counted(points, voxel_size).points;
}

/// Voxel-filtered set of unit vectors with an exact nearest-neighbor index.
/// Immutable between keyframe insertions; concurrent reads are safe while no
/// insertion is in progress.
class SphericalMap {
 public:
  explicit SphericalMap(double voxel_size = MapConfig{}.voxel_size)
      : voxel_size_(voxel_size) {
    if (!(voxel_size > 0.0 && voxel_size < 2.0))
      throw ConfigError("voxel_size: must be in (0, 2)");
  }

  /// Merges the world-frame points of an aligned frame into the map,
  /// re-filters and rebuilds the index.
  void insert_keyframe(const EventSphericalFrame& frame, const Mat3& rotation) {
    std::vector<Vec3> merged;
    merged.reserve(points_.size() + frame.points.size());
    merged.insert(merged.end(), points_.begin(), points_.end());
    for (const Vec3& p : frame.points) merged.push_back(rotation * p);
    auto filtered = voxel_downsample_counted(merged, voxel_size_);
    points_ = std::move(filtered.points);
    dropped_cancelled_ += filtered.dropped_cancelled;
    index_.build(points_);
    last_keyframe_rotation_ = rotation;
    last_keyframe_time_ = frame.t0;
  }

  /// Exact k nearest map points of q by Euclidean distance in R^3 (which
  /// orders identically to great-circle angle for unit vectors).
  void knn_query(const Vec3& q, unsigned k, std::vector<KdTree3::Neighbor>& out) const {
    if (k > points_.size()) {
      throw DomainError("knn_query: map holds " + std::to_string(points_.size()) +
                        " points, fewer than k=" + std::to_string(k));
    }
    index_.knn(q, k, out);
  }

  std::vector<KdTree3::Neighbor> knn_query(const Vec3& q, unsigned k) const {
    std::vector<KdTree3::Neighbor> out;
    knn_query(q, k, out);
    return out;
  }

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  double voxel_size() const { return voxel_size_; }
  std::size_t dropped_cancelled_buckets() const { return dropped_cancelled_; }
  const Mat3& last_keyframe_rotation() const { return last_keyframe_rotation_; }
  double last_keyframe_time() const { return last_keyframe_time_; }

  /// Snapshot format: one `x y z` unit vector per line, 17 significant digits.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write file: " + path);
    char buf[128];
    for (const Vec3& p : points_) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
      out << buf;
    }
  }

  static SphericalMap load(const std::string& path, double voxel_size = MapConfig{}.voxel_size) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    SphericalMap map(voxel_size);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      Vec3 p;
      const char* s = line.data();
      const char* end = s + line.size();
      for (int c = 0; c < 3; ++c) {
        while (s < end && *s == ' ') ++s;
        const auto res = std::from_chars(s, end, p[c]);
        if (res.ec != std::errc{}) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": malformed map point");
        }
        s = res.ptr;
      }
      if (std::abs(p.norm() - 1.0) > 1e-9) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": map point is not unit norm");
      }
      map.points_.push_back(p);
    }
    map.index_.build(map.points_);
    return map;
  }

 private:
  std::vector<Vec3> points_;
  KdTree3 index_;
  double voxel_size_;
  Mat3 last_keyframe_rotation_ = Mat3::Identity();
  double last_keyframe_time_ = 0.0;
  std::size_t dropped_cancelled_ = 0;
};

}  // namespace evrot

#endif  // EVROT_SPHERICAL_MAP_HPP

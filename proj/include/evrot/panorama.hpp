#ifndef EVROT_PANORAMA_HPP
#define EVROT_PANORAMA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evrot/camera.hpp"
#include "evrot/errors.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"
#include "evrot/parallel.hpp"

namespace evrot {

struct PanoramaSpec {
  double phi_h = 2.0 * M_PI;  // horizontal span, rad
  double phi_v = M_PI / 2.0;  // vertical field of view, rad
  int width = 1000;
  int height = 500;
  double percentile = 0.90;  // count percentile mapped to intensity 255

  void validate() const {
    if (!(phi_h > 0.0 && phi_h <= 2.0 * M_PI))
      throw ConfigError("phi_h: must be in (0, 2pi]");
    if (!(phi_v > 0.0 && phi_v < M_PI)) throw ConfigError("phi_v: must be in (0, pi)");
    if (width < 1) throw ConfigError("width: must be >= 1");
    if (height < 1) throw ConfigError("height: must be >= 1");
    if (!(percentile > 0.0 && percentile <= 1.0))
      throw ConfigError("percentile: must be in (0, 1]");
  }
};

/// Count grid plus its rendered 8-bit view.
struct PanoramaImage {
  int width = 0, height = 0;
  std::vector<std::uint32_t> counts;   // row-major, width*height
  std::vector<std::uint8_t> intensity; // row-major, [0, 255]

  std::uint32_t count_at(int u, int v) const {
    return counts[static_cast<std::size_t>(v) * width + u];
  }
};

/// Radial projection onto the unit cylinder: (x, y, z) / sqrt(x^2 + y^2).
/// Poles (x = y = 0) have no cylinder image.
inline Vec3 sphere_to_cylinder(const Vec3& p) {
  const double rho = std::sqrt(p.x() * p.x() + p.y() * p.y());
  if (rho == 0.0) throw DomainError("sphere_to_cylinder: pole input (x = y = 0)");
  return Vec3(p.x() / rho, p.y() / rho, p.z() / rho);
}

/// Maps a cylinder point to continuous pixel coordinates. Column grows with
/// azimuth from the +x seam; row 0 is the top edge z = tan(phi_v / 2).
/// Returns nullopt for points outside the vertical extent or azimuth span.
inline std::optional<Vec2> cylinder_to_pixel(const Vec3& pc, const PanoramaSpec& spec) {
  const double z_max = std::tan(spec.phi_v * 0.5);
  if (std::abs(pc.z()) > z_max) return std::nullopt;
  double az = std::atan2(pc.y(), pc.x());
  if (az < 0.0) az += 2.0 * M_PI;
  if (az > spec.phi_h) return std::nullopt;
  const double col = az / spec.phi_h * spec.width;
  const double row = (z_max - pc.z()) / (2.0 * z_max) * spec.height;
  return Vec2(col, row);
}

namespace detail {

inline void splat(PanoramaImage& img, const PanoramaSpec& spec, const Vec3& p) {
  const double rho2 = p.x() * p.x() + p.y() * p.y();
  if (rho2 == 0.0) return;  // poles carry no cylinder image
  const auto px = cylinder_to_pixel(sphere_to_cylinder(p), spec);
  if (!px) return;
  const int u = std::min(static_cast<int>(px->x()), spec.width - 1);
  const int v = std::min(static_cast<int>(px->y()), spec.height - 1);
  img.counts[static_cast<std::size_t>(v) * spec.width + u] += 1;
}

/// Percentile normalization (nearest-rank over nonzero counts); counts at or
/// above the reference map to 255.
inline void render_intensity(PanoramaImage& img, double percentile) {
  img.intensity.assign(img.counts.size(), 0);
  std::vector<std::uint32_t> nonzero;
  nonzero.reserve(img.counts.size() / 4);
  for (std::uint32_t c : img.counts) {
    if (c > 0) nonzero.push_back(c);
  }
  if (nonzero.empty()) return;
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(percentile * double(nonzero.size())));
  const std::size_t idx = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(nonzero.begin(), nonzero.begin() + idx, nonzero.end());
  const double ref = double(nonzero[idx]);
  for (std::size_t i = 0; i < img.counts.size(); ++i) {
    if (img.counts[i] == 0) continue;
    const double scaled = std::round(255.0 * double(img.counts[i]) / ref);
    img.intensity[i] = static_cast<std::uint8_t>(std::min(255.0, scaled));
  }
}

}  // namespace detail

/// Rasterizes unit vectors into the count grid by nearest-pixel accumulation.
/// Input is partitioned across workers with per-worker grids merged by
/// addition, so the result does not depend on the partition.
inline PanoramaImage render_panorama(std::span<const Vec3> points, const PanoramaSpec& spec) {
  spec.validate();
  PanoramaImage img;
  img.width = spec.width;
  img.height = spec.height;
  img.counts.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
  const unsigned workers = global_pool().workers();
  if (workers == 1 || points.size() < 1u << 16) {
    for (const Vec3& p : points) detail::splat(img, spec, p);
  } else {
    std::vector<PanoramaImage> grids(workers);
    parallel_chunks(points.size(), [&](unsigned chunk, std::size_t b, std::size_t e) {
      PanoramaImage& g = grids[chunk];
      g.width = spec.width;
      g.height = spec.height;
      g.counts.assign(img.counts.size(), 0);
      for (std::size_t i = b; i < e; ++i) detail::splat(g, spec, points[i]);
    });
    for (const PanoramaImage& g : grids) {
      if (g.counts.empty()) continue;
      for (std::size_t i = 0; i < img.counts.size(); ++i) img.counts[i] += g.counts[i];
    }
  }
  detail::render_intensity(img, spec.percentile);
  return img;
}

/// Event-window rendering: each event is warped by the pose in force at its
/// timestamp (latest estimate at or before it) and kept only if it falls
/// within `window` seconds of that pose. Both inputs must be time-ordered.
inline PanoramaImage render_panorama_events(std::span<const Event> events,
                                            std::span<const TimedRotation> trajectory,
                                            const CameraModel& camera, double window,
                                            const PanoramaSpec& spec) {
  spec.validate();
  if (!(window > 0.0)) throw ConfigError("window: must be > 0");
  std::vector<Vec3> pts;
  pts.reserve(events.size());
  const std::vector<Vec3> dirs = build_pixel_direction_table(camera);
  std::size_t k = 0;
  for (const Event& e : events) {
    while (k + 1 < trajectory.size() && trajectory[k + 1].t <= e.t) ++k;
    if (trajectory.empty() || trajectory[k].t > e.t) continue;
    if (e.t - trajectory[k].t > window) continue;
    pts.push_back(trajectory[k].R * dirs[static_cast<std::size_t>(e.v) * camera.width + e.u]);
  }
  return render_panorama(pts, spec);
}

/// Binary PGM (P5), maximum value 255.
inline void write_pgm(const PanoramaImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.intensity.data()),
            static_cast<std::streamsize>(img.intensity.size()));
}

inline PanoramaImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw ParseError(path + ": not an 8-bit P5 PGM");
  }
  in.get();  // single whitespace after header
  PanoramaImage img;
  img.width = w;
  img.height = h;
  img.intensity.resize(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(img.intensity.data()),
          static_cast<std::streamsize>(img.intensity.size()));
  if (!in) throw ParseError(path + ": truncated PGM payload");
  return img;
}

}  // namespace evrot

#endif  // EVROT_PANORAMA_HPP

#ifndef EVROT_EVENT_FRONTEND_HPP
#define EVROT_EVENT_FRONTEND_HPP

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evrot/camera.hpp"
#include "evrot/errors.hpp"
#include "evrot/geometry.hpp"

namespace evrot {

/// One asynchronous brightness-change measurement.
struct Event {
  double t = 0.0;       // seconds
  std::uint16_t u = 0;  // pixel column
  std::uint16_t v = 0;  // pixel row
  std::int8_t p = 1;    // polarity, +1 or -1
};

/// Motion-compensated set of spherical points sharing a reference timestamp.
struct EventSphericalFrame {
  double t0 = 0.0;  // timestamp of the first contributing event
  std::vector<Vec3> points;
};

struct FrameConfig {
  double f = 1000.0;     // segmentation frequency, Hz
  int n = 1500;          // events retained per segment
  int min_events = 50;   // segments below this are skipped

  void validate() const {
    if (!(f > 0.0)) throw ConfigError("fps: segmentation frequency must be > 0");
    if (min_events < 1) throw ConfigError("min_events: must be >= 1");
    if (n < min_events) throw ConfigError("n: must be >= min_events");
  }
};

/// A segment of the event stream: [begin, retained_end) are the events kept
/// for the frame (at most n), [begin, total_end) is the full segment.
struct Segment {
  double t_start = 0.0;
  std::size_t begin = 0;
  std::size_t retained_end = 0;
  std::size_t total_end = 0;
  bool skipped = false;
};

namespace detail {

inline const char* skip_spaces(const char* p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t')) ++p;
  return p;
}

template <class T>
const char* parse_field(const char* p, const char* end, T& out, int lineno,
                        const char* what) {
  p = skip_spaces(p, end);
  const auto res = std::from_chars(p, end, out);
  if (res.ec != std::errc{}) {
    throw ParseError("events line " + std::to_string(lineno) + ": malformed " +
                     std::string(what));
  }
  return res.ptr;
}

}  // namespace detail

/// Parses the `t u v p` event text format (t decimal seconds; u, v integer
/// pixels; p in {0,1} mapped to {-1,+1}). Verifies non-decreasing timestamps
/// and pixel bounds; errors carry the offending line number.
inline std::vector<Event> parse_event_stream(std::string_view text, int width, int height) {
  std::vector<Event> events;
  events.reserve(text.size() / 20);
  const char* p = text.data();
  const char* end = p + text.size();
  int lineno = 0;
  double prev_t = 0.0;
  while (p < end) {
    const char* line_end = static_cast<const char*>(memchr(p, '\n', end - p));
    if (line_end == nullptr) line_end = end;
    ++lineno;
    const char* q = detail::skip_spaces(p, line_end);
    if (q == line_end) {  // blank line
      p = line_end + 1;
      continue;
    }
    double t = 0.0;
    long u = 0, v = 0, pol = 0;
    q = detail::parse_field(q, line_end, t, lineno, "timestamp");
    q = detail::parse_field(q, line_end, u, lineno, "u coordinate");
    q = detail::parse_field(q, line_end, v, lineno, "v coordinate");
    q = detail::parse_field(q, line_end, pol, lineno, "polarity");
    if (detail::skip_spaces(q, line_end) != line_end) {
      throw ParseError("events line " + std::to_string(lineno) + ": trailing characters");
    }
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw ParseError("events line " + std::to_string(lineno) + ": invalid timestamp");
    }
    if (!events.empty() && t < prev_t) {
      throw ParseError("events line " + std::to_string(lineno) +
                       ": timestamp decreases (" + std::to_string(t) + " < " +
                       std::to_string(prev_t) + ")");
    }
    if (u < 0 || u >= width || v < 0 || v >= height) {
      throw ParseError("events line " + std::to_string(lineno) + ": pixel (" +
                       std::to_string(u) + ", " + std::to_string(v) +
                       ") outside sensor bounds " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    if (pol != 0 && pol != 1) {
      throw ParseError("events line " + std::to_string(lineno) +
                       ": polarity must be 0 or 1");
    }
    events.push_back(Event{t, static_cast<std::uint16_t>(u),
                           static_cast<std::uint16_t>(v),
                           static_cast<std::int8_t>(pol == 1 ? 1 : -1)});
    prev_t = t;
    p = line_end + 1;
  }
  return events;
}

inline void format_event(char* buf, std::size_t cap, const Event& e) {
  std::snprintf(buf, cap, "%.9f %u %u %d\n", e.t, unsigned(e.u), unsigned(e.v),
                e.p > 0 ? 1 : 0);
}

inline void write_events(std::ostream& out, std::span<const Event> events) {
  char buf[64];
  for (const Event& e : events) {
    format_event(buf, sizeof(buf), e);
    out << buf;
  }
}

/// Splits time-ordered events into segments of duration 1/f anchored at the
/// first event's timestamp. At most the first n events of each segment are
/// retained; segments with fewer than min_events events are marked skipped.
/// Empty segments (no events at all) are emitted as skipped placeholders so
/// the pose timeline has one entry per segment.
inline std::vector<Segment> segment_events(std::span<const Event> events,
                                           const FrameConfig& cfg) {
  cfg.validate();
  std::vector<Segment> segments;
  if (events.empty()) return segments;
  const double t_anchor = events.front().t;
  const double dt = 1.0 / cfg.f;
  std::size_t i = 0;
  for (std::size_t k = 0; i < events.size(); ++k) {
    const double t_hi = t_anchor + (k + 1) * dt;
    Segment seg;
    seg.t_start = t_anchor + k * dt;
    seg.begin = i;
    while (i < events.size() && events[i].t < t_hi) ++i;
    seg.total_end = i;
    const std::size_t count = seg.total_end - seg.begin;
    seg.retained_end = seg.begin + std::min<std::size_t>(count, cfg.n);
    seg.skipped = count < static_cast<std::size_t>(cfg.min_events);
    segments.push_back(seg);
  }
  return segments;
}

struct TimedRotation {
  double t = 0.0;
  Mat3 R = Mat3::Identity();
};

/// Angular velocity implied by the two most recent pose estimates:
/// ω = log(R_{k-1}ᵀ R_k) / (t_k − t_{k-1}). With fewer than two poses the
/// estimate is zero (bootstrap).
inline Vec3 estimate_omega(std::span<const TimedRotation> history) {
  if (history.size() < 2) return Vec3::Zero();
  const TimedRotation& a = history[history.size() - 2];
  const TimedRotation& b = history[history.size() - 1];
  const double dt = b.t - a.t;
  if (dt == 0.0) throw DomainError("estimate_omega: pose timestamps are equal");
  return log_map(Mat3(a.R.transpose() * b.R)) / dt;
}

namespace detail {

/// Warps spherical points of a time-ordered event slice to the first event's
/// timestamp under a constant camera angular velocity ω (body rate): a point
/// seen at t_i maps to exp((t_i − t0) ω̂) p_i at t0.
template <class Project>
EventSphericalFrame compensate_events(std::span<const Event> events, const Vec3& omega,
                                      Project&& project) {
  if (events.empty()) throw DomainError("compensate_frame: empty segment");
  EventSphericalFrame frame;
  frame.t0 = events.front().t;
  frame.points.resize(events.size());
  const bool warp = omega.squaredNorm() > 0.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    Vec3 p = project(events[i]);
    if (warp) p = exp_map((events[i].t - frame.t0) * omega) * p;
    frame.points[i] = p;
  }
  return frame;
}

}  // namespace detail

inline EventSphericalFrame compensate_frame(std::span<const Event> events,
                                            const Vec3& omega, const CameraModel& cam) {
  return detail::compensate_events(events, omega, [&cam](const Event& e) {
    return pixel_to_sphere(cam, Vec2(e.u, e.v));
  });
}

/// Variant taking a precomputed per-pixel direction table (row-major,
/// width*height entries), the fast path used by the odometry loop.
inline EventSphericalFrame compensate_frame(std::span<const Event> events,
                                            const Vec3& omega,
                                            std::span<const Vec3> pixel_dirs, int width) {
  return detail::compensate_events(events, omega, [&](const Event& e) {
    return pixel_dirs[static_cast<std::size_t>(e.v) * width + e.u];
  });
}

/// Builds the per-pixel unit direction table for integer event coordinates.
inline std::vector<Vec3> build_pixel_direction_table(const CameraModel& cam) {
  std::vector<Vec3> dirs(static_cast<std::size_t>(cam.width) * cam.height);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      dirs[static_cast<std::size_t>(v) * cam.width + u] =
          pixel_to_sphere(cam, Vec2(u, v));
    }
  }
  return dirs;
}

}  // namespace evrot

#endif  // EVROT_EVENT_FRONTEND_HPP

#ifndef EVROT_EVALUATION_HPP
#define EVROT_EVALUATION_HPP

#include <Eigen/Geometry>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "evrot/errors.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"

namespace evrot {

/// Ordered list of timestamped rotations; timestamps strictly increasing.
using RotationTrajectory = std::vector<TimedRotation>;

inline constexpr double kRadToDeg = 180.0 / M_PI;

/// Trajectory file format: one `t qx qy qz qw` line per pose (unit
/// quaternion, w-last). Quaternions must be normalized within 1e-6.
inline RotationTrajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  RotationTrajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    double vals[5];
    const char* s = line.data();
    const char* end = s + line.size();
    for (int i = 0; i < 5; ++i) {
      while (s < end && (*s == ' ' || *s == '\t')) ++s;
      const auto res = std::from_chars(s, end, vals[i]);
      if (res.ec != std::errc{}) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": expected `t qx qy qz qw`");
      }
      s = res.ptr;
    }
    Eigen::Quaterniond q(vals[4], vals[1], vals[2], vals[3]);  // w, x, y, z
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": quaternion norm deviates from 1 by more than 1e-6");
    }
    q.normalize();
    if (!traj.empty() && vals[0] <= traj.back().t) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": timestamps must be strictly increasing");
    }
    traj.push_back(TimedRotation{vals[0], q.toRotationMatrix()});
  }
  return traj;
}

inline void write_trajectory_line(std::ostream& out, double t, const Mat3& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%.9f %.12g %.12g %.12g %.12g\n", t, q.x(), q.y(),
                q.z(), q.w());
  out << buf;
}

inline void save_trajectory(const RotationTrajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  for (const TimedRotation& s : traj) write_trajectory_line(out, s.t, s.R);
}

struct PairedSample {
  double t_est = 0.0, t_gt = 0.0;
  Mat3 r_est = Mat3::Identity();
  Mat3 r_gt = Mat3::Identity();
};

struct Association {
  std::vector<PairedSample> pairs;
  std::size_t dropped = 0;
};

/// Pairs each estimate with the nearest-in-time ground-truth pose within
/// max_dt; unmatched estimates are dropped and counted.
inline Association associate(const RotationTrajectory& est, const RotationTrajectory& gt,
                             double max_dt) {
  if (est.empty() || gt.empty()) {
    throw DomainError("associate: trajectories must be non-empty");
  }
  Association out;
  out.pairs.reserve(est.size());
  std::size_t j = 0;
  for (const TimedRotation& e : est) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - e.t) <= std::abs(gt[j].t - e.t)) {
      ++j;
    }
    if (std::abs(gt[j].t - e.t) <= max_dt) {
      out.pairs.push_back(PairedSample{e.t, gt[j].t, e.R, gt[j].R});
    } else {
      ++out.dropped;
    }
  }
  if (out.pairs.empty()) {
    throw DomainError("associate: no pairs within max_dt = " + std::to_string(max_dt));
  }
  return out;
}

/// Mean absolute rotation error in degrees: (1/N) Σ ‖log(R'ᵀ_k R_k)‖.
/// With alignment on, estimates are pre-multiplied by G = R'_0 R_0ᵀ so the
/// first pair matches exactly (removes the global gauge).
inline double mean_ape(std::span<const PairedSample> pairs, bool align = true) {
  if (pairs.empty()) throw DomainError("mean_ape: no pairs");
  const Mat3 g = align ? Mat3(pairs.front().r_gt * pairs.front().r_est.transpose())
                       : Mat3(Mat3::Identity());
  double sum = 0.0;
  for (const PairedSample& s : pairs) {
    sum += log_map(Mat3(s.r_gt.transpose() * g * s.r_est)).norm();
  }
  return sum / double(pairs.size()) * kRadToDeg;
}

/// Mean relative rotation error in degrees over intervals of delta_deg of
/// ground-truth rotation. Walks the paired ground-truth poses accumulating
/// the geodesic angle between consecutive samples and cuts a window at the
/// first crossing of delta_deg; windows do not overlap. Invariant to global
/// pre-rotations of either trajectory.
inline double mean_rpe(std::span<const PairedSample> pairs, double delta_deg = 10.0) {
  if (pairs.size() < 2) throw DomainError("mean_rpe: need at least two pairs");
  if (!(delta_deg > 0.0)) throw DomainError("mean_rpe: delta_deg must be > 0");
  const double delta_rad = delta_deg / kRadToDeg;
  // Slack absorbs rounding in the accumulated sum when interval ends line up
  // exactly with sample boundaries.
  const double cut = delta_rad * (1.0 - 1e-9);
  double sum = 0.0;
  std::size_t count = 0;
  std::size_t start = 0;
  double accum = 0.0;
  for (std::size_t i = 0; i + 1 < pairs.size(); ++i) {
    accum += geodesic_angle(pairs[i].r_gt, pairs[i + 1].r_gt);
    if (accum >= cut) {
      const Mat3 rel_gt = pairs[start].r_gt.transpose() * pairs[i + 1].r_gt;
      const Mat3 rel_est = pairs[start].r_est.transpose() * pairs[i + 1].r_est;
      sum += log_map(Mat3(rel_gt.transpose() * rel_est)).norm();
      ++count;
      start = i + 1;
      accum = 0.0;
    }
  }
  if (count == 0) {
    throw DomainError("mean_rpe: ground truth never accumulates " +
                      std::to_string(delta_deg) + " deg of rotation");
  }
  return sum / double(count) * kRadToDeg;
}

struct MetricsReport {
  double ape_mean_deg = 0.0;
  double rpe_mean_deg = 0.0;
  std::size_t pairs = 0;
  std::size_t dropped = 0;
  bool aligned = true;
  double rpe_delta_deg = 10.0;
};

inline void write_report(const MetricsReport& r, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "ape_mean_deg %.9g\nrpe_mean_deg %.9g\npairs %zu\ndropped %zu\n"
                "aligned %d\nrpe_delta_deg %.9g\n",
                r.ape_mean_deg, r.rpe_mean_deg, r.pairs, r.dropped, r.aligned ? 1 : 0,
                r.rpe_delta_deg);
  out << buf;
}

}  // namespace evrot

#endif  // EVROT_EVALUATION_HPP

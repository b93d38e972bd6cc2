#ifndef EVROT_PIPELINE_HPP
#define EVROT_PIPELINE_HPP

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evrot/camera.hpp"
#include "evrot/errors.hpp"
#include "evrot/es_icp.hpp"
#include "evrot/evaluation.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"
#include "evrot/key_value.hpp"
#include "evrot/panorama.hpp"
#include "evrot/spherical_map.hpp"

namespace evrot {

struct PipelineConfig {
  std::string camera_file;
  FrameConfig frame;
  IcpConfig icp;
  MapConfig map;
  std::optional<PanoramaSpec> panorama;

  void validate() const {
    frame.validate();
    icp.validate();
    map.validate();
    if (panorama) panorama->validate();
  }
};

/// Loads pipeline settings from a `key value` config file. Unknown keys are
/// rejected to catch typos early. Flags (applied by the CLI) win over file
/// values, so this only fills the base config.
inline PipelineConfig load_pipeline_config(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  PipelineConfig cfg;
  cfg.camera_file = kv.get_string("camera_file", "");
  cfg.frame.f = kv.get_double("fps", cfg.frame.f);
  cfg.frame.n = static_cast<int>(kv.get_int("n", cfg.frame.n));
  cfg.frame.min_events = static_cast<int>(kv.get_int("min_events", cfg.frame.min_events));
  cfg.icp.k_neighbors = static_cast<unsigned>(kv.get_int("k_neighbors", cfg.icp.k_neighbors));
  cfg.icp.max_iterations =
      static_cast<int>(kv.get_int("max_iterations", cfg.icp.max_iterations));
  cfg.icp.convergence_eps = kv.get_double("convergence_eps", cfg.icp.convergence_eps);
  cfg.icp.max_corr_dist = kv.get_double("max_corr_dist", cfg.icp.max_corr_dist);
  cfg.icp.line_condition_min =
      kv.get_double("line_condition_min", cfg.icp.line_condition_min);
  cfg.map.theta_t = kv.get_double("theta_t", cfg.map.theta_t);
  cfg.map.voxel_size = kv.get_double("voxel_size", cfg.map.voxel_size);
  return cfg;
}

enum class FrameStatus { kInit, kOk, kHeld, kFailed };

inline const char* to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::kInit: return "init";
    case FrameStatus::kOk: return "ok";
    case FrameStatus::kHeld: return "held";
    case FrameStatus::kFailed: return "failed";
  }
  return "?";
}

/// Timestamped SO(3) estimate with its alignment summary; one per segment.
struct RotationEstimate {
  double t = 0.0;
  Mat3 R = Mat3::Identity();
  int iterations = 0;
  double cost = 0.0;
  int inliers = 0;
  bool converged = false;
  FrameStatus status = FrameStatus::kHeld;
};

struct OdometryResult {
  std::vector<RotationEstimate> estimates;  // one per segment
  SphericalMap map;
  std::size_t aligned_frames = 0;
  std::size_t failed_frames = 0;
  std::size_t held_frames = 0;
  std::size_t keyframes = 0;
  double processing_seconds = 0.0;
  double sequence_seconds = 0.0;

  OdometryResult() : map(MapConfig{}.voxel_size) {}
};

/// Runs the tracking + mapping loop over a parsed event stream: segment,
/// predict with the constant-velocity model, motion-compensate, align with
/// ES-ICP, keyframe-gate and merge into the map. The first usable frame
/// bootstraps the map at identity without alignment. Alignment failures hold
/// the previous pose and the run continues; a run where at least half of the
/// attempted alignments fail is an error.
inline OdometryResult run_odometry(const PipelineConfig& cfg, std::span<const Event> events,
                                   const CameraModel& camera) {
  cfg.validate();
  camera.validate();
  const auto clock_start = std::chrono::steady_clock::now();

  OdometryResult result;
  result.map = SphericalMap(cfg.map.voxel_size);
  if (events.empty()) return result;

  const std::vector<Vec3> pixel_dirs = build_pixel_direction_table(camera);
  const std::vector<Segment> segments = segment_events(events, cfg.frame);
  result.estimates.reserve(segments.size());

  std::vector<TimedRotation> history;  // emitted (t, R), strictly increasing t
  Mat3 last_pose = Mat3::Identity();
  bool bootstrapped = false;

  for (const Segment& seg : segments) {
    RotationEstimate est;
    if (seg.skipped) {
      est.t = seg.t_start;
      est.R = last_pose;
      est.status = FrameStatus::kHeld;
      ++result.held_frames;
      result.estimates.push_back(est);
      history.push_back(TimedRotation{est.t, est.R});
      continue;
    }
    const std::span<const Event> frame_events =
        events.subspan(seg.begin, seg.retained_end - seg.begin);
    const Vec3 omega = estimate_omega(history);
    const EventSphericalFrame frame =
        compensate_frame(frame_events, omega, pixel_dirs, camera.width);
    est.t = frame.t0;

    if (!bootstrapped) {
      est.R = Mat3::Identity();
      est.status = FrameStatus::kInit;
      result.map.insert_keyframe(frame, est.R);
      ++result.keyframes;
      bootstrapped = true;
    } else {
      const double dt = frame.t0 - history.back().t;
      const Mat3 r_init = history.back().R * exp_map(omega * dt);
      try {
        const IcpResult icp = align_frame(frame, result.map, r_init, cfg.icp);
        est.R = icp.rotation;
        est.iterations = icp.iterations;
        est.cost = icp.final_cost;
        est.inliers = icp.inlier_count;
        est.converged = icp.converged;
        est.status = FrameStatus::kOk;
        ++result.aligned_frames;
        if (is_keyframe(est.R, result.map.last_keyframe_rotation(), cfg.map.theta_t)) {
          result.map.insert_keyframe(frame, est.R);
          ++result.keyframes;
        }
      } catch (const AlignmentError&) {
        est.R = last_pose;
        est.status = FrameStatus::kFailed;
        ++result.failed_frames;
      } catch (const DegenerateGeometryError&) {
        est.R = last_pose;
        est.status = FrameStatus::kFailed;
        ++result.failed_frames;
      }
    }
    last_pose = est.R;
    result.estimates.push_back(est);
    history.push_back(TimedRotation{est.t, est.R});
    if (history.size() > 4) history.erase(history.begin());
  }

  const std::size_t attempted = result.aligned_frames + result.failed_frames;
  if (attempted > 0 && result.failed_frames * 2 >= attempted) {
    throw AlignmentError("run_odometry: " + std::to_string(result.failed_frames) + " of " +
                         std::to_string(attempted) + " alignment attempts failed");
  }

  result.sequence_seconds = events.back().t - events.front().t;
  result.processing_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

inline void save_estimates(const std::vector<RotationEstimate>& estimates,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  for (const RotationEstimate& e : estimates) write_trajectory_line(out, e.t, e.R);
}

/// Diagnostics stream: one `t iterations cost inliers status` line per
/// segment, then a trailing summary with the realtime ratio.
inline void save_diagnostics(const OdometryResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  char buf[192];
  for (const RotationEstimate& e : result.estimates) {
    std::snprintf(buf, sizeof(buf), "%.9f %d %.6g %d %s\n", e.t, e.iterations, e.cost,
                  e.inliers, to_string(e.status));
    out << buf;
  }
  const double ratio = result.sequence_seconds > 0.0
                           ? result.processing_seconds / result.sequence_seconds
                           : 0.0;
  std::snprintf(buf, sizeof(buf),
                "# frames %zu aligned %zu held %zu failed %zu keyframes %zu\n"
                "# processing_seconds %.6f sequence_seconds %.6f realtime_ratio %.6f\n",
                result.estimates.size(), result.aligned_frames, result.held_frames,
                result.failed_frames, result.keyframes, result.processing_seconds,
                result.sequence_seconds, ratio);
  out << buf;
}

}  // namespace evrot

#endif  // EVROT_PIPELINE_HPP

#ifndef EVROT_SIMULATOR_HPP
#define EVROT_SIMULATOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "evrot/camera.hpp"
#include "evrot/errors.hpp"
#include "evrot/evaluation.hpp"
#include "evrot/event_frontend.hpp"
#include "evrot/geometry.hpp"
#include "evrot/parallel.hpp"

namespace evrot {

/// World-frame edge directions observed by the simulated camera.
struct Scene {
  std::vector<Vec3> landmarks;
  std::uint64_t seed = 0;
};

enum class MotionKind { kConstantRate, kSinusoid };

struct AxisWave {
  double amplitude = 0.0;  // rad
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
};

/// Closed-form rotation-vector trajectory R(t) = exp(θ(t)).
struct MotionProfile {
  MotionKind kind = MotionKind::kConstantRate;
  Vec3 constant_rate = Vec3::Zero();  // rad/s, used by kConstantRate
  std::array<AxisWave, 3> waves{};    // used by kSinusoid
  double duration = 0.0;              // s

  void validate() const {
    if (!(duration > 0.0)) throw ConfigError("duration: must be > 0");
    if (!constant_rate.allFinite()) throw ConfigError("rate: must be finite");
    for (const AxisWave& w : waves) {
      if (!std::isfinite(w.amplitude) || !std::isfinite(w.frequency) ||
          !std::isfinite(w.phase)) {
        throw ConfigError("waves: must be finite");
      }
    }
  }

  Vec3 angle_at(double t) const {
    if (kind == MotionKind::kConstantRate) return constant_rate * t;
    Vec3 theta;
    for (int i = 0; i < 3; ++i) {
      theta[i] = waves[i].amplitude *
                 std::sin(2.0 * M_PI * waves[i].frequency * t + waves[i].phase);
    }
    return theta;
  }

  Vec3 angle_rate_at(double t) const {
    if (kind == MotionKind::kConstantRate) return constant_rate;
    Vec3 rate;
    for (int i = 0; i < 3; ++i) {
      const double w = 2.0 * M_PI * waves[i].frequency;
      rate[i] = waves[i].amplitude * w * std::cos(w * t + waves[i].phase);
    }
    return rate;
  }

  /// Upper bound on ‖ω(t)‖ (body rate); ‖Jr‖ <= 1 so ‖θ̇‖ bounds it.
  double max_rate_bound() const {
    if (kind == MotionKind::kConstantRate) return constant_rate.norm();
    Vec3 peak;
    for (int i = 0; i < 3; ++i) {
      peak[i] = std::abs(waves[i].amplitude) * 2.0 * M_PI * waves[i].frequency;
    }
    return peak.norm();
  }
};

/// Ground-truth attitude at t (camera-to-world). Exact and differentiable.
inline Mat3 trajectory_at(const MotionProfile& profile, double t) {
  if (t < 0.0 || t > profile.duration) {
    throw DomainError("trajectory_at: t outside [0, duration]");
  }
  return exp_map(profile.angle_at(t));
}

/// Analytic body angular velocity: ω = Jr(θ) θ̇.
inline Vec3 body_rate_at(const MotionProfile& profile, double t) {
  return right_jacobian(profile.angle_at(t)) * profile.angle_rate_at(t);
}

namespace detail {

/// Canonical [0, 1) double from a 64-bit generator; bit-stable everywhere.
inline double canonical_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Samples `count` directions uniformly on the spherical cap of half-angle
/// cap_angle around cap_axis. Deterministic per seed.
inline Scene generate_scene(std::uint64_t seed, std::size_t count, const Vec3& cap_axis,
                            double cap_angle) {
  if (count < 1) throw ConfigError("count: must be >= 1");
  std::mt19937_64 rng(seed);
  const Vec3 axis = cap_axis.normalized();
  // Orthonormal basis {e1, e2, axis}.
  const Vec3 helper = std::abs(axis.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  const Vec3 e1 = axis.cross(helper).normalized();
  const Vec3 e2 = axis.cross(e1);
  const double z_min = std::cos(std::min(cap_angle, M_PI));
  Scene scene;
  scene.seed = seed;
  scene.landmarks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = z_min + (1.0 - z_min) * detail::canonical_uniform(rng);
    const double phi = 2.0 * M_PI * detail::canonical_uniform(rng);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    scene.landmarks.push_back(z * axis + rho * (std::cos(phi) * e1 + std::sin(phi) * e2));
  }
  return scene;
}

/// Half-angle of the field of view measured to the sensor corners.
inline double fov_half_diagonal(const CameraModel& camera) {
  double worst = 0.0;
  const double us[2] = {0.0, double(camera.width - 1)};
  const double vs[2] = {0.0, double(camera.height - 1)};
  for (double u : us) {
    for (double v : vs) {
      const Vec3 dir = pixel_to_sphere(camera, Vec2(u, v));
      worst = std::max(worst, std::acos(std::clamp(dir.z(), -1.0, 1.0)));
    }
  }
  return worst;
}

/// Cap half-angle covering everything the camera can see along the profile.
inline double swept_cap_angle(const MotionProfile& profile, const CameraModel& camera) {
  const double fov = fov_half_diagonal(camera);
  double worst = 0.0;
  const int samples = 4096;
  for (int i = 0; i <= samples; ++i) {
    const double t = profile.duration * double(i) / samples;
    const Vec3 axis_dir = exp_map(profile.angle_at(t)).col(2);  // R(t) * e_z
    worst = std::max(worst, std::acos(std::clamp(axis_dir.z(), -1.0, 1.0)));
  }
  return std::min(worst + fov + 0.05, M_PI);
}

struct SimulatorConfig {
  double pixel_threshold = 1.0;  // px of apparent motion per event
  double fine_step = 1e-5;       // s; trajectory sampling step
  int gt_stride = 1;             // emit every gt_stride-th sample as ground truth

  void validate() const {
    if (!(pixel_threshold > 0.0)) throw ConfigError("pixel_threshold: must be > 0");
    if (!(fine_step > 0.0)) throw ConfigError("fine_step: must be > 0");
    if (gt_stride < 1) throw ConfigError("gt_stride: must be >= 1");
  }
};

struct SimulationResult {
  std::vector<Event> events;
  RotationTrajectory ground_truth;
};

/// Generates an idealized rotation-only event stream with exact ground truth.
///
/// The trajectory is sampled on a fixed fine grid. A landmark emits an event
/// (rounded pixel, exact sample time, polarity alternating per landmark)
/// whenever its continuous projection has moved pixel_threshold or more since
/// its previous emission while staying inside the sensor; leaving the sensor
/// resets the reference. Landmarks are simulated independently with
/// rate-bounded step skipping, which produces exactly the stream a dense scan
/// of the grid would: no threshold crossing or boundary transition can occur
/// inside a skipped span.
inline SimulationResult simulate_events(const Scene& scene, const MotionProfile& profile,
                                        const CameraModel& camera,
                                        const SimulatorConfig& cfg = {}) {
  profile.validate();
  cfg.validate();
  camera.validate();
  if (scene.landmarks.empty()) throw ConfigError("scene: no landmarks");

  std::int64_t n_steps = static_cast<std::int64_t>(profile.duration / cfg.fine_step);
  while (double(n_steps) * cfg.fine_step > profile.duration) --n_steps;
  const double rate_bound = std::max(profile.max_rate_bound(), 1e-12);
  const double px_rate = 2.5 * std::max(camera.fx, camera.fy) * rate_bound;  // px/s
  const double fov = fov_half_diagonal(camera) + 0.02;
  const double z_vis = std::cos(std::min(fov + 0.2, M_PI / 2.0 - 0.05));

  const unsigned workers = global_pool().workers();
  std::vector<std::vector<std::vector<Event>>> runs(workers);

  parallel_chunks(scene.landmarks.size(), [&](unsigned chunk, std::size_t lb, std::size_t le) {
    auto& chunk_runs = runs[chunk];
    chunk_runs.resize(le - lb);
    for (std::size_t l = lb; l < le; ++l) {
      const Vec3& landmark = scene.landmarks[l];
      std::vector<Event>& out = chunk_runs[l - lb];
      bool has_ref = false;
      Vec2 ref = Vec2::Zero();
      std::int8_t polarity = 1;
      std::int64_t i = 0;
      while (i <= n_steps) {
        const double t = double(i) * cfg.fine_step;
        const Vec3 pc = exp_map(profile.angle_at(t)).transpose() * landmark;
        std::int64_t skip = 1;
        if (pc.z() < z_vis) {
          has_ref = false;
          const double gap = std::acos(std::clamp(pc.z(), -1.0, 1.0)) - fov;
          skip = std::max<std::int64_t>(
              1, static_cast<std::int64_t>(gap / (rate_bound * cfg.fine_step)));
        } else {
          const Vec2 px = sphere_to_pixel(camera, pc);
          const long ui = std::lround(px.x());
          const long vi = std::lround(px.y());
          const bool in_bounds =
              ui >= 0 && ui < camera.width && vi >= 0 && vi < camera.height;
          if (!in_bounds) {
            has_ref = false;
            const double gap = std::acos(std::clamp(pc.z(), -1.0, 1.0)) - fov;
            if (gap > 0.0) {
              skip = std::max<std::int64_t>(
                  1, static_cast<std::int64_t>(gap / (rate_bound * cfg.fine_step)));
            }
          } else if (!has_ref) {
            has_ref = true;
            ref = px;
          } else {
            const double moved = (px - ref).norm();
            if (moved >= cfg.pixel_threshold) {
              out.push_back(Event{t, static_cast<std::uint16_t>(ui),
                                  static_cast<std::uint16_t>(vi), polarity});
              polarity = static_cast<std::int8_t>(-polarity);
              ref = px;
            }
          }
          if (in_bounds && has_ref) {
            const double margin_px = std::min(
                cfg.pixel_threshold - (px - ref).norm(),
                std::min(std::min(px.x() + 0.5, camera.width - 0.5 - px.x()),
                         std::min(px.y() + 0.5, camera.height - 0.5 - px.y())));
            skip = std::max<std::int64_t>(
                1, static_cast<std::int64_t>(margin_px / (px_rate * cfg.fine_step)));
          }
        }
        i += skip;
      }
    }
  });

  SimulationResult result;
  std::size_t total = 0;
  for (const auto& chunk_runs : runs) {
    for (const auto& run : chunk_runs) total += run.size();
  }
  result.events.reserve(total);
  for (const auto& chunk_runs : runs) {
    for (const auto& run : chunk_runs) {
      result.events.insert(result.events.end(), run.begin(), run.end());
    }
  }
  runs.clear();
  runs.shrink_to_fit();
  // Landmark-major runs stay in landmark order, so a stable sort on time
  // reproduces the (time, landmark) order a dense time scan would emit.
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  if (result.events.empty()) {
    throw DomainError("simulate_events: motion produced no events");
  }

  result.ground_truth.reserve(static_cast<std::size_t>(n_steps / cfg.gt_stride) + 1);
  for (std::int64_t i = 0; i <= n_steps; i += cfg.gt_stride) {
    const double t = double(i) * cfg.fine_step;
    result.ground_truth.push_back(TimedRotation{t, trajectory_at(profile, t)});
  }
  return result;
}

/// Camera used by the bundled presets: a 240x180 sensor with mild
/// radial-tangential distortion.
inline CameraModel preset_camera() {
  CameraModel m;
  m.fx = 200.0;
  m.fy = 200.0;
  m.cx = 120.0;
  m.cy = 90.0;
  m.k1 = -0.10;
  m.k2 = 0.02;
  m.p1 = 5e-4;
  m.p2 = -5e-4;
  m.k3 = 0.002;
  m.width = 240;
  m.height = 180;
  return m;
}

struct PresetSpec {
  MotionProfile profile;
  std::size_t landmark_count = 0;
  std::uint64_t seed = 1;
};

/// Bundled motion presets.
///
/// `dm`: multi-axis sinusoid averaging ~120 deg/s of body rate at
/// rate_scale 1; rate_scale multiplies the wave frequencies, sweeping the
/// average rate proportionally (~0.42 -> 50 deg/s, ~3.25 -> 390 deg/s).
/// `ld`: gentler profile averaging ~107 deg/s at rate_scale 1, meant for
/// long-duration runs. Landmark density is calibrated so the event rate
/// stays in a tracking-friendly band as the rate scales.
inline PresetSpec make_preset(std::string_view name, double rate_scale, double duration,
                              std::uint64_t seed = 1) {
  if (!(rate_scale > 0.0)) throw ConfigError("rate_scale: must be > 0");
  if (!(duration > 0.0)) throw ConfigError("duration: must be > 0");
  PresetSpec spec;
  spec.seed = seed;
  MotionProfile& p = spec.profile;
  p.kind = MotionKind::kSinusoid;
  p.duration = duration;
  if (name == "dm") {
    p.waves = {AxisWave{0.28, 0.90 * rate_scale, 0.0},
               AxisWave{0.36, 0.66 * rate_scale, 0.0},
               AxisWave{0.70, 0.47 * rate_scale, 0.0}};
    spec.landmark_count =
        static_cast<std::size_t>(std::max(400.0, 9000.0 / rate_scale));
  } else if (name == "ld") {
    p.waves = {AxisWave{0.30, 0.55 * rate_scale, 0.0},
               AxisWave{0.42, 0.40 * rate_scale, 0.0},
               AxisWave{0.80, 0.30 * rate_scale, 0.0}};
    spec.landmark_count =
        static_cast<std::size_t>(std::max(400.0, 5200.0 / rate_scale));
  } else {
    throw ConfigError("preset: unknown preset `" + std::string(name) + "`");
  }
  return spec;
}

}  // namespace evrot

#endif  // EVROT_SIMULATOR_HPP

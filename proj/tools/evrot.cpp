// Command-line front end: event simulation, rotational odometry, panorama
// rendering and trajectory evaluation.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "evrot/evaluation.hpp"
#include "evrot/key_value.hpp"
#include "evrot/panorama.hpp"
#include "evrot/parallel.hpp"
#include "evrot/pipeline.hpp"
#include "evrot/simulator.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw evrot::ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_simulate(const std::string& preset, double rate_scale, double duration,
                 std::uint64_t seed, long count_override, double threshold,
                 int gt_every, const std::string& out_dir) {
  evrot::PresetSpec spec = evrot::make_preset(preset, rate_scale, duration, seed);
  if (count_override > 0) spec.landmark_count = static_cast<std::size_t>(count_override);
  const evrot::CameraModel camera = evrot::preset_camera();

  const double cap = evrot::swept_cap_angle(spec.profile, camera);
  const evrot::Scene scene =
      evrot::generate_scene(spec.seed, spec.landmark_count, evrot::Vec3(0, 0, 1), cap);

  evrot::SimulatorConfig sim_cfg;
  sim_cfg.pixel_threshold = threshold;
  sim_cfg.gt_stride = gt_every;
  const evrot::SimulationResult sim =
      evrot::simulate_events(scene, spec.profile, camera, sim_cfg);

  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/events.txt");
    if (!out) throw evrot::ParseError("cannot write " + out_dir + "/events.txt");
    evrot::write_events(out, sim.events);
  }
  evrot::save_trajectory(sim.ground_truth, out_dir + "/groundtruth.txt");
  evrot::save_camera(camera, out_dir + "/camera.txt");

  const double span = sim.events.back().t - sim.events.front().t;
  std::printf("simulate: preset %s rate_scale %.3g landmarks %zu events %zu (%.3g ev/s)\n",
              preset.c_str(), rate_scale, scene.landmarks.size(), sim.events.size(),
              double(sim.events.size()) / std::max(span, 1e-9));
  return 0;
}

int cmd_track(const std::string& config_file, const std::string& camera_file,
              const std::string& events_file, const std::string& out_dir,
              const CLI::App* cmd, evrot::PipelineConfig cfg, unsigned threads,
              const std::string& pano_out, const evrot::PanoramaSpec& pano_spec) {
  if (!config_file.empty()) {
    evrot::PipelineConfig file_cfg = evrot::load_pipeline_config(config_file);
    // Flags win over config-file values.
    const auto keep = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    if (!keep("--fps")) cfg.frame.f = file_cfg.frame.f;
    if (!keep("--n")) cfg.frame.n = file_cfg.frame.n;
    if (!keep("--min-events")) cfg.frame.min_events = file_cfg.frame.min_events;
    if (!keep("--k")) cfg.icp.k_neighbors = file_cfg.icp.k_neighbors;
    if (!keep("--max-iterations")) cfg.icp.max_iterations = file_cfg.icp.max_iterations;
    if (!keep("--eps")) cfg.icp.convergence_eps = file_cfg.icp.convergence_eps;
    if (!keep("--max-corr-dist")) cfg.icp.max_corr_dist = file_cfg.icp.max_corr_dist;
    if (!keep("--line-condition-min"))
      cfg.icp.line_condition_min = file_cfg.icp.line_condition_min;
    if (!keep("--theta-t")) cfg.map.theta_t = file_cfg.map.theta_t;
    if (!keep("--voxel")) cfg.map.voxel_size = file_cfg.map.voxel_size;
    if (cfg.camera_file.empty()) cfg.camera_file = file_cfg.camera_file;
  }
  if (!camera_file.empty()) cfg.camera_file = camera_file;
  if (cfg.camera_file.empty()) {
    throw evrot::ConfigError("camera_file: missing (pass --camera or set it in the config)");
  }
  cfg.validate();
  evrot::set_worker_count(threads);

  const evrot::CameraModel camera = evrot::load_camera(cfg.camera_file);
  const std::string text = read_file(events_file);
  const std::vector<evrot::Event> events =
      evrot::parse_event_stream(text, camera.width, camera.height);

  const evrot::OdometryResult result = evrot::run_odometry(cfg, events, camera);

  fs::create_directories(out_dir);
  evrot::save_estimates(result.estimates, out_dir + "/trajectory.txt");
  evrot::save_diagnostics(result, out_dir + "/diagnostics.txt");
  result.map.save(out_dir + "/map.txt");
  if (!pano_out.empty()) {
    const evrot::PanoramaImage img = evrot::render_panorama(result.map.points(), pano_spec);
    evrot::write_pgm(img, pano_out);
  }

  const double ratio = result.sequence_seconds > 0.0
                           ? result.processing_seconds / result.sequence_seconds
                           : 0.0;
  std::printf(
      "track: %zu segments (%zu aligned, %zu held, %zu failed), %zu keyframes, "
      "map %zu points, %.2f s for %.2f s of data (ratio %.3f)\n",
      result.estimates.size(), result.aligned_frames, result.held_frames,
      result.failed_frames, result.keyframes, result.map.size(),
      result.processing_seconds, result.sequence_seconds, ratio);
  return 0;
}

int cmd_panorama(const std::string& map_file, const std::string& events_file,
                 const std::string& traj_file, const std::string& camera_file,
                 double window, const evrot::PanoramaSpec& spec, const std::string& out) {
  evrot::PanoramaImage img;
  if (!map_file.empty()) {
    std::vector<evrot::Vec3> points;
    {
      std::ifstream in(map_file);
      if (!in) throw evrot::ParseError("cannot open file: " + map_file);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        evrot::Vec3 p;
        if (std::sscanf(line.c_str(), "%lf %lf %lf", &p.x(), &p.y(), &p.z()) != 3) {
          throw evrot::ParseError(map_file + ": malformed map point");
        }
        points.push_back(p);
      }
    }
    if (points.empty()) {
      std::fprintf(stderr, "panorama: warning: map is empty, writing an all-zero image\n");
    }
    img = evrot::render_panorama(points, spec);
  } else {
    const evrot::CameraModel camera = evrot::load_camera(camera_file);
    const std::string text = read_file(events_file);
    const std::vector<evrot::Event> events =
        evrot::parse_event_stream(text, camera.width, camera.height);
    const evrot::RotationTrajectory traj = evrot::load_trajectory(traj_file);
    img = evrot::render_panorama_events(events, traj, camera, window, spec);
  }
  evrot::write_pgm(img, out);
  std::printf("panorama: wrote %dx%d image to %s\n", img.width, img.height, out.c_str());
  return 0;
}

int cmd_evaluate(const std::string& est_file, const std::string& gt_file, bool no_align,
                 double max_dt, double rpe_delta, const std::string& out) {
  const evrot::RotationTrajectory est = evrot::load_trajectory(est_file);
  const evrot::RotationTrajectory gt = evrot::load_trajectory(gt_file);
  const evrot::Association assoc = evrot::associate(est, gt, max_dt);

  evrot::MetricsReport report;
  report.aligned = !no_align;
  report.rpe_delta_deg = rpe_delta;
  report.pairs = assoc.pairs.size();
  report.dropped = assoc.dropped;
  report.ape_mean_deg = evrot::mean_ape(assoc.pairs, report.aligned);
  report.rpe_mean_deg = evrot::mean_rpe(assoc.pairs, rpe_delta);

  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw evrot::ParseError("cannot write file: " + out);
    evrot::write_report(report, f);
  }
  evrot::write_report(report, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera rotational odometry and mapping on the unit sphere"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic event sequence");
  std::string sim_preset = "dm";
  double sim_rate_scale = 1.0, sim_duration = 5.0, sim_threshold = 1.0;
  std::uint64_t sim_seed = 1;
  long sim_count = 0;
  int sim_gt_every = 1;
  std::string sim_out;
  sim->add_option("--preset", sim_preset, "Motion preset: dm or ld")
      ->check(CLI::IsMember({"dm", "ld"}));
  sim->add_option("--rate-scale", sim_rate_scale, "Angular rate multiplier");
  sim->add_option("--duration", sim_duration, "Sequence duration in seconds");
  sim->add_option("--seed", sim_seed, "Scene seed");
  sim->add_option("--count", sim_count, "Landmark count override");
  sim->add_option("--threshold", sim_threshold, "Pixel displacement per event");
  sim->add_option("--gt-every", sim_gt_every,
                  "Write every k-th 10us ground-truth sample");
  sim->add_option("--out", sim_out, "Output directory")->required();

  // track
  auto* trk = app.add_subcommand("track", "Run rotational odometry on an event file");
  std::string trk_config, trk_camera, trk_events, trk_out, trk_pano_out;
  evrot::PipelineConfig trk_cfg;
  evrot::PanoramaSpec trk_pano;
  unsigned trk_threads = 0;
  trk->add_option("--config", trk_config, "Key-value config file");
  trk->add_option("--camera", trk_camera, "Camera calibration file");
  trk->add_option("--events", trk_events, "Event file (t u v p per line)")->required();
  trk->add_option("--out", trk_out, "Output directory")->required();
  trk->add_option("--fps", trk_cfg.frame.f, "Segmentation frequency f, Hz");
  trk->add_option("--n", trk_cfg.frame.n, "Events retained per segment");
  trk->add_option("--min-events", trk_cfg.frame.min_events, "Minimum events per frame");
  trk->add_option("--k", trk_cfg.icp.k_neighbors, "k nearest neighbors for line fitting");
  trk->add_option("--max-iterations", trk_cfg.icp.max_iterations, "ICP iteration cap");
  trk->add_option("--eps", trk_cfg.icp.convergence_eps, "ICP convergence threshold, rad");
  trk->add_option("--max-corr-dist", trk_cfg.icp.max_corr_dist,
                  "Correspondence gate, rad of great-circle angle");
  trk->add_option("--line-condition-min", trk_cfg.icp.line_condition_min,
                  "Minimum dominant eigenvalue fraction for line fits");
  trk->add_option("--theta-t", trk_cfg.map.theta_t, "Keyframe rotation threshold, rad");
  trk->add_option("--voxel", trk_cfg.map.voxel_size, "Map voxel edge length");
  trk->add_option("--threads", trk_threads, "Worker threads (0 = auto)");
  trk->add_option("--pano-out", trk_pano_out, "Render the final map to this PGM file");
  trk->add_option("--pano-width", trk_pano.width, "Panorama width");
  trk->add_option("--pano-height", trk_pano.height, "Panorama height");
  trk->add_option("--pano-phi-h", trk_pano.phi_h, "Panorama horizontal span, rad");
  trk->add_option("--pano-phi-v", trk_pano.phi_v, "Panorama vertical FOV, rad");
  trk->add_option("--pano-percentile", trk_pano.percentile, "Intensity percentile");

  // panorama
  auto* pan = app.add_subcommand("panorama", "Render a panorama from a map or events");
  std::string pan_map, pan_events, pan_traj, pan_camera, pan_out;
  evrot::PanoramaSpec pan_spec;
  double pan_window = 0.0002;
  pan->add_option("--map", pan_map, "Map snapshot (x y z per line)");
  pan->add_option("--events", pan_events, "Event file (requires --traj and --camera)");
  pan->add_option("--traj", pan_traj, "Estimated trajectory for event warping");
  pan->add_option("--camera", pan_camera, "Camera calibration file");
  pan->add_option("--window", pan_window, "Trailing event window per pose, seconds");
  pan->add_option("--width", pan_spec.width, "Image width");
  pan->add_option("--height", pan_spec.height, "Image height");
  pan->add_option("--phi-h", pan_spec.phi_h, "Horizontal span, rad");
  pan->add_option("--phi-v", pan_spec.phi_v, "Vertical field of view, rad");
  pan->add_option("--percentile", pan_spec.percentile, "Intensity percentile");
  pan->add_option("--out", pan_out, "Output PGM file")->required();

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "Compare a trajectory against ground truth");
  std::string eva_est, eva_gt, eva_out;
  bool eva_no_align = false;
  double eva_max_dt = 0.0005, eva_delta = 10.0;
  eva->add_option("--est", eva_est, "Estimated trajectory")->required();
  eva->add_option("--gt", eva_gt, "Ground-truth trajectory")->required();
  eva->add_flag("--no-align", eva_no_align, "Skip first-pose alignment for APE");
  eva->add_option("--max-dt", eva_max_dt, "Association gate, seconds");
  eva->add_option("--rpe-delta", eva_delta, "RPE interval, degrees of gt rotation");
  eva->add_option("--out", eva_out, "Metrics report file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(sim_preset, sim_rate_scale, sim_duration, sim_seed, sim_count,
                          sim_threshold, sim_gt_every, sim_out);
    }
    if (trk->parsed()) {
      return cmd_track(trk_config, trk_camera, trk_events, trk_out, trk, trk_cfg,
                       trk_threads, trk_pano_out, trk_pano);
    }
    if (pan->parsed()) {
      if (pan_map.empty() && (pan_events.empty() || pan_traj.empty() || pan_camera.empty())) {
        std::fprintf(stderr, "panorama: need --map, or --events with --traj and --camera\n");
        return 2;
      }
      return cmd_panorama(pan_map, pan_events, pan_traj, pan_camera, pan_window, pan_spec,
                          pan_out);
    }
    if (eva->parsed()) {
      return cmd_evaluate(eva_est, eva_gt, eva_no_align, eva_max_dt, eva_delta, eva_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

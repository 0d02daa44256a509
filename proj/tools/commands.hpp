#pragma once

// Subcommand bodies. Each one reads its inputs, runs the library and writes
// its outputs, recording every file it touched for the run manifest.

#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "seamless/seamless.hpp"

namespace seamless::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct RunRecord {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  ordered_json parameters = ordered_json::object();
  fs::path manifest;  // default location, next to the main output
};

inline std::string read_input(const fs::path& path, RunRecord& rec) {
  std::string text = io::read_text(path);
  rec.inputs.push_back(path);
  return text;
}

inline void write_output(const fs::path& path, const std::string& content, RunRecord& rec) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, content);
  rec.outputs.push_back(path);
}

inline fs::path manifest_next_to(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

inline ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

// ---------------------------------------------------------------------------

struct SimulateArgs {
  fs::path out_dir;
  std::uint64_t seed = 42;
  double pixel_sigma = 0.5;
  double pose_position_sigma = 0.0;
  double pose_angle_sigma_deg = 0.0;
  double sighting_sigma = 0.0;
  double point_sigma = 0.5;
  int tie_points = 50;
  int stereo_width = 640;
  int stereo_height = 480;
  double baseline = 0.2;
  double background_depth = 8.0;
  double foreground_depth = 3.5;
  bool collinear_tags = false;
  std::string crs = std::string(io::kDefaultCrs);
};

inline RunRecord cmd_simulate(const SimulateArgs& a) {
  RunRecord rec;
  rec.manifest = a.out_dir / "manifest.json";
  rec.parameters = {{"seed", a.seed},
                    {"pixel_sigma", a.pixel_sigma},
                    {"pose_position_sigma", a.pose_position_sigma},
                    {"pose_angle_sigma_deg", a.pose_angle_sigma_deg},
                    {"sighting_sigma", a.sighting_sigma},
                    {"point_sigma", a.point_sigma},
                    {"tie_points", a.tie_points},
                    {"stereo_size", {a.stereo_width, a.stereo_height}},
                    {"baseline_m", a.baseline},
                    {"depths_m", {a.background_depth, a.foreground_depth}},
                    {"collinear_tags", a.collinear_tags},
                    {"crs", a.crs}};

  synth::SceneSpec spec = synth::default_spec(a.seed);
  spec.noise.pixel_sigma = a.pixel_sigma;
  spec.noise.pose_position_sigma = a.pose_position_sigma;
  spec.noise.pose_angle_sigma_deg = a.pose_angle_sigma_deg;
  spec.noise.sighting_sigma = a.sighting_sigma;
  spec.tie_points = a.tie_points;
  spec.collinear_tags = a.collinear_tags;
  if (!(a.point_sigma >= 0.0)) throw Error(ErrorCode::InvalidSpec, "point sigma must be non-negative");
  if (a.stereo_width < 8 || a.stereo_height < 8) throw Error(ErrorCode::InvalidSpec, "stereo images must be at least 8x8");

  const CameraIntrinsics aerial = CameraIntrinsics::aerial_default();
  const synth::Scene scene = synth::gen_scene(spec, aerial);
  const synth::RenderedObservations obs = synth::render_observations(scene, aerial, a.pixel_sigma, a.seed);

  std::map<std::int64_t, Vec3> initial = scene.tie_points;
  Rng point_rng(sub_seed(a.seed, 30));
  for (auto& [id, p] : initial) {
    for (int k = 0; k < 3; ++k) p(k) += point_rng.normal(a.point_sigma);
  }

  const fs::path& d = a.out_dir;
  write_output(d / "aerial_intrinsics.txt", io::format_intrinsics(aerial), rec);
  write_output(d / "aerial_poses.csv", io::format_poses(scene.reported_poses), rec);
  write_output(d / "aerial_poses_truth.csv", io::format_poses(scene.aerial_poses), rec);
  write_output(d / "tag_observations.csv", io::format_observations(obs.tags), rec);
  write_output(d / "tags_truth.txt", io::format_tag_file(scene.truth_landmarks(), a.crs), rec);
  write_output(d / "sightings.csv", io::format_sightings(scene.sightings), rec);
  write_output(d / "trajectory_local.csv", io::format_trajectory(scene.local_trajectory), rec);
  write_output(d / "trajectory_world_truth.csv", io::format_trajectory(scene.world_trajectory), rec);
  write_output(d / "transform_truth.txt", io::format_transform(RegistrationResult{scene.local_to_world, {}, {}, 0.0}, {}),
               rec);
  write_output(d / "tie_points_truth.csv", io::format_points(scene.tie_points), rec);
  write_output(d / "tie_points_initial.csv", io::format_points(initial), rec);
  write_output(d / "tie_measurements.csv", io::format_measurements(obs.tie_points), rec);

  const CameraIntrinsics stereo = [&] {
    CameraIntrinsics c = synth::stereo_default();
    c.width_px = a.stereo_width;
    c.height_px = a.stereo_height;
    c.x0_px = (a.stereo_width - 1) / 2.0;
    c.y0_px = (a.stereo_height - 1) / 2.0;
    return c;
  }();
  const int w = a.stereo_width, h = a.stereo_height;
  const auto depth = synth::two_plane_depth(w, h, a.background_depth, a.foreground_depth, w / 4, h / 4, w / 2, 3 * h / 4);
  const synth::StereoPair pair = synth::gen_stereo_pair(depth, a.baseline, stereo, sub_seed(a.seed, 40));
  DisparityMap truth(w, h, 0, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!pair.occluded(x, y)) truth.value[truth.index(x, y)] = pair.disparity(x, y);
    }
  }
  RgbImage rgb(w, h);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(pair.left.data[i]);
    rgb.data[i] = Rgb{v, static_cast<std::uint8_t>(v / 2 + 64), static_cast<std::uint8_t>(255 - v)};
  }
  write_output(d / "stereo_intrinsics.txt", io::format_intrinsics(stereo), rec);
  write_output(d / "stereo_left.pgm", io::format_pgm(pair.left), rec);
  write_output(d / "stereo_right.pgm", io::format_pgm(pair.right), rec);
  write_output(d / "stereo_truth.pfm", io::format_pfm(truth), rec);
  write_output(d / "stereo_rgb.ppm", io::format_ppm(rgb), rec);

  spdlog::info("simulated {} tags, {} aerial images, {} tag observations, {} trajectory samples, {} sightings",
               scene.tags.size(), scene.aerial_poses.size(), obs.tags.size(), scene.world_trajectory.size(),
               scene.sightings.size());
  return rec;
}

// ---------------------------------------------------------------------------

struct TriangulateArgs {
  fs::path observations;
  fs::path poses;
  fs::path intrinsics;
  fs::path out;
  std::string crs = std::string(io::kDefaultCrs);
  bool reject_outliers = true;
};

inline RunRecord cmd_triangulate_tags(const TriangulateArgs& a) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out);
  rec.parameters = {{"crs", a.crs}, {"reject_outliers", a.reject_outliers}};
  const auto obs = io::parse_observations(read_input(a.observations, rec), a.observations.string());
  const auto poses = io::parse_poses(read_input(a.poses, rec), a.poses.string());
  const auto cam = io::parse_intrinsics(read_input(a.intrinsics, rec), a.intrinsics.string());
  if (obs.empty()) throw Error(ErrorCode::InsufficientObservations, "no tags: the observation file is empty");

  TriangulationOptions opts;
  opts.reject_outliers = a.reject_outliers;
  const TagTriangulation result = triangulate_tags(obs, poses, cam, opts);
  for (const auto& f : result.failures) spdlog::warn("tag {}: {}", f.tag_id, f.message);
  if (result.landmarks.empty()) {
    throw Error(result.failures.empty() ? ErrorCode::InsufficientObservations : result.failures.front().code,
                "no tags could be triangulated");
  }
  for (const auto& lm : result.landmarks) {
    spdlog::info("tag {}: {} rays, rms {:.4f} m", lm.tag_id, lm.n_rays, lm.rms_residual);
  }
  write_output(a.out, io::format_tag_file(result.landmarks, a.crs), rec);
  return rec;
}

// ---------------------------------------------------------------------------

struct CoregisterArgs {
  fs::path sightings;
  fs::path tags;
  fs::path trajectory;
  fs::path out_trajectory;
  fs::path out_transform;
  bool estimate_scale = false;
  bool robust = true;
};

inline RunRecord cmd_coregister(const CoregisterArgs& a) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out_transform);
  rec.parameters = {{"estimate_scale", a.estimate_scale}, {"robust", a.robust}};
  const auto sightings = io::parse_sightings(read_input(a.sightings, rec), a.sightings.string());
  const io::TagFile tags = io::parse_tag_file(read_input(a.tags, rec), a.tags.string());
  const Trajectory local = io::parse_trajectory(read_input(a.trajectory, rec), a.trajectory.string());
  rec.parameters["crs"] = tags.crs;

  const CorrespondenceSet set = collect_correspondences(sightings, tags.tags);
  for (auto id : set.unmatched_tags) spdlog::warn("tag {} was sighted but has no world coordinates", id);
  RegistrationOptions opts;
  opts.estimate_scale = a.estimate_scale;
  opts.robust = a.robust;
  const RegistrationResult reg = estimate_rigid_transform(set.pairs, opts);
  for (auto id : reg.dropped_tags) spdlog::warn("tag {} dropped as an outlier", id);
  spdlog::info("registered {} tags, rms {:.4f} m", set.pairs.size(), reg.rms);

  write_output(a.out_trajectory, io::format_trajectory(apply_to_trajectory(reg.transform, local)), rec);
  write_output(a.out_transform, io::format_transform(reg, set.pairs), rec);
  return rec;
}

// ---------------------------------------------------------------------------

struct BundleArgs {
  fs::path intrinsics;
  fs::path poses;
  fs::path points;
  fs::path measurements;
  fs::path out_poses;
  fs::path out_points;
  std::vector<std::string> anchors;
  bool fix_poses = false;
  bool fix_points = false;
  bool refine_focal = false;
  bool refine_principal_point = false;
  bool refine_distortion = false;
  int max_iters = 100;
};

inline RunRecord cmd_ba(const BundleArgs& a) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out_poses);
  BundleProblem p;
  p.intrinsics = io::parse_intrinsics(read_input(a.intrinsics, rec), a.intrinsics.string());
  p.poses = io::parse_poses(read_input(a.poses, rec), a.poses.string());
  p.points = io::parse_points(read_input(a.points, rec), a.points.string());
  p.measurements = io::parse_measurements(read_input(a.measurements, rec), a.measurements.string());
  p.anchors = std::set<std::string>(a.anchors.begin(), a.anchors.end());
  for (const auto& id : p.anchors) {
    if (!p.poses.contains(id)) throw Error(ErrorCode::MissingPose, "anchor '" + id + "' is not in the pose file");
  }
  p.mask.poses = !a.fix_poses;
  p.mask.points = !a.fix_points;
  p.mask.focal = a.refine_focal;
  p.mask.principal_point = a.refine_principal_point;
  p.mask.distortion = a.refine_distortion;
  if (a.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max-iters must be at least 1");
  SolveOptions opts;
  opts.max_iters = a.max_iters;
  rec.parameters = {{"anchors", a.anchors},       {"fix_poses", a.fix_poses},
                    {"fix_points", a.fix_points}, {"refine_focal", a.refine_focal},
                    {"refine_principal_point", a.refine_principal_point},
                    {"refine_distortion", a.refine_distortion},
                    {"max_iters", a.max_iters}};

  const auto [solved, report] = solve(p, opts);
  spdlog::info("bundle adjustment: rms {:.6g} -> {:.6g} px in {} iterations ({})", report.initial_rms,
               report.final_rms, report.iterations, report.termination);
  if (a.refine_focal) spdlog::info("refined focal length {} mm", solved.intrinsics.f_mm);
  write_output(a.out_poses, io::format_poses(solved.poses), rec);
  write_output(a.out_points, io::format_points(solved.points), rec);
  return rec;
}

// ---------------------------------------------------------------------------

struct SgmArgs {
  fs::path left;
  fs::path right;
  fs::path out;
  SgmParams params;
  fs::path cloud;        // optional PLY
  fs::path intrinsics;   // required with a cloud
  double baseline = 0.2;
  fs::path trajectory;   // optional: places the cloud in the trajectory frame
  double timestamp = 0.0;
  fs::path rgb;          // optional colour for the cloud
};

inline RunRecord cmd_sgm(const SgmArgs& a) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out);
  const SgmParams& s = a.params;
  rec.parameters = {{"d_min", s.d_min},
                    {"d_max", s.d_max},
                    {"p1", s.p1},
                    {"p2", s.p2},
                    {"paths", s.n_paths},
                    {"census", {s.census_width, s.census_height}},
                    {"uniqueness_ratio", s.uniqueness_ratio},
                    {"lr_check", s.lr_check},
                    {"lr_max_diff", s.lr_max_diff}};
  const GrayImage left = io::parse_pgm(read_input(a.left, rec), a.left.string());
  const GrayImage right = io::parse_pgm(read_input(a.right, rec), a.right.string());
  const DisparityMap disp = compute_disparity(left, right, s);
  std::size_t valid = 0;
  for (float v : disp.value) valid += std::isnan(v) ? 0 : 1;
  spdlog::info("disparity: {} of {} pixels valid", valid, disp.value.size());
  write_output(a.out, io::format_pfm(disp), rec);

  if (!a.cloud.empty()) {
    if (a.intrinsics.empty()) throw Error(ErrorCode::InvalidArgument, "--cloud needs --intrinsics");
    const CameraIntrinsics cam = io::parse_intrinsics(read_input(a.intrinsics, rec), a.intrinsics.string());
    if (cam.width_px != disp.width || cam.height_px != disp.height) {
      throw Error(ErrorCode::DimensionMismatch, "stereo intrinsics do not match the image size");
    }
    Pose pose;
    if (!a.trajectory.empty()) {
      pose = io::parse_trajectory(read_input(a.trajectory, rec), a.trajectory.string()).pose_at(a.timestamp);
    }
    std::optional<RgbImage> rgb;
    if (!a.rgb.empty()) rgb = io::parse_ppm(read_input(a.rgb, rec), a.rgb.string());
    const PointCloud cloud = disparity_to_cloud(disp, cam, a.baseline, pose, rgb ? &*rgb : nullptr);
    rec.parameters["baseline_m"] = a.baseline;
    rec.parameters["timestamp"] = a.timestamp;
    spdlog::info("cloud: {} points", cloud.size());
    write_output(a.cloud, io::format_ply(cloud), rec);
  }
  return rec;
}

// ---------------------------------------------------------------------------

struct FuseArgs {
  std::vector<fs::path> inputs;
  fs::path out;
  FusionSettings settings;
  std::uint64_t occlusion_threshold = 1;
  fs::path rgb;             // optional colourisation image
  fs::path rgb_intrinsics;
  fs::path rgb_trajectory;  // pose of the colour camera, sampled at rgb_timestamp
  double rgb_timestamp = 0.0;
};

inline RunRecord cmd_fuse(const FuseArgs& a) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out);
  const FusionSettings& s = a.settings;
  rec.parameters = {{"voxel_size", s.voxel_size},
                    {"origin", vec_json(s.origin)},
                    {"min_points", s.min_points},
                    {"min_rgb_fraction", s.min_rgb_fraction},
                    {"occlusion_threshold", a.occlusion_threshold}};
  if (a.inputs.empty()) throw Error(ErrorCode::InvalidArgument, "no input clouds");

  // Each input file is one frame; naming the same file twice counts it once.
  std::vector<PointCloud> clouds;
  std::set<fs::path> seen;
  for (const auto& path : a.inputs) {
    const std::string bytes = read_input(path, rec);
    if (!seen.insert(fs::weakly_canonical(path)).second) {
      spdlog::warn("{} given twice; counted once", path.string());
      continue;
    }
    PointCloud c = io::parse_ply(bytes, path.string());
    for (auto& p : c.points) p.frame_id = static_cast<std::int64_t>(clouds.size());
    clouds.push_back(std::move(c));
  }

  PointCloud fused = fuse_clouds(clouds, s);
  std::size_t raw = 0;
  for (const auto& c : clouds) raw += c.size();
  spdlog::info("fused {} points from {} clouds into {} points", raw, clouds.size(), fused.size());

  if (!a.rgb.empty()) {
    if (a.rgb_intrinsics.empty() || a.rgb_trajectory.empty()) {
      throw Error(ErrorCode::InvalidArgument, "--rgb needs --rgb-intrinsics and --rgb-trajectory");
    }
    const RgbImage img = io::parse_ppm(read_input(a.rgb, rec), a.rgb.string());
    const CameraIntrinsics cam = io::parse_intrinsics(read_input(a.rgb_intrinsics, rec), a.rgb_intrinsics.string());
    const Pose pose =
        io::parse_trajectory(read_input(a.rgb_trajectory, rec), a.rgb_trajectory.string()).pose_at(a.rgb_timestamp);
    VoxelGrid grid(s.voxel_size, s.origin);
    for (const auto& c : clouds) accumulate(grid, c);
    ColorizeOptions opts;
    opts.occlusion_threshold = a.occlusion_threshold;
    fused = colorize_with_occlusion(fused, grid, img, cam, pose, opts);
    std::size_t colored = 0;
    for (const auto& p : fused.points) colored += p.color ? 1 : 0;
    rec.parameters["rgb_timestamp"] = a.rgb_timestamp;
    spdlog::info("colourised {} of {} points", colored, fused.size());
  }
  write_output(a.out, io::format_ply(fused), rec);
  return rec;
}

// ---------------------------------------------------------------------------

struct AssessArgs {
  fs::path estimated;
  fs::path truth;
  fs::path out;
  fs::path pairs;  // optional
  fs::path text;   // optional
};

inline std::vector<IdPoint> id_points(const io::TagFile& f) {
  std::vector<IdPoint> out;
  for (const auto& t : f.tags) out.push_back({t.tag_id, t.position});
  return out;
}

inline RunRecord cmd_assess(const AssessArgs& a, std::string* report_text = nullptr) {
  RunRecord rec;
  rec.manifest = manifest_next_to(a.out);
  const io::TagFile est = io::parse_tag_file(read_input(a.estimated, rec), a.estimated.string());
  const io::TagFile tru = io::parse_tag_file(read_input(a.truth, rec), a.truth.string());
  if (est.crs != tru.crs) spdlog::warn("CRS differs: '{}' vs '{}'", est.crs, tru.crs);
  rec.parameters = {{"crs", tru.crs}};
  const AccuracyReport r = assess_accuracy(id_points(est), id_points(tru));
  write_output(a.out, io::format_accuracy_csv(r), rec);
  if (!a.pairs.empty()) write_output(a.pairs, io::format_pairs_csv(r), rec);
  const std::string text = io::format_accuracy_text(r);
  if (!a.text.empty()) write_output(a.text, text, rec);
  if (report_text != nullptr) *report_text = text;
  return rec;
}

}  // namespace seamless::cli

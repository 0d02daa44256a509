#pragma once

// Synthetic scenes with exact ground truth: tag layouts, aerial camera
// networks, walking trajectories, tag observations and random-dot stereo
// pairs. Every output is a pure function of the SceneSpec and its seed.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seamless/bba.hpp"
#include "seamless/coregister.hpp"
#include "seamless/error.hpp"
#include "seamless/geocore.hpp"
#include "seamless/markergeoref.hpp"
#include "seamless/random.hpp"
#include "seamless/raster.hpp"

namespace seamless::synth {

struct TagPlacement {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct FlightPlan {
  double altitude_m = 100.0;  // above the tag centroid
  double overlap = 0.85;      // forward overlap; side overlap uses the same fraction
  int strips = 1;
  int images_per_strip = 5;
  double attitude_jitter_deg = 0.5;  // true attitude spread around nadir
};

struct WalkPlan {
  std::vector<Vec3> waypoints;  // world frame
  double speed_mps = 1.4;
  double sample_rate_hz = 10.0;
  double sighting_range_m = 12.0;
  double sighting_interval_s = 1.0;
};

struct NoiseModel {
  double pixel_sigma = 0.0;
  double pose_position_sigma = 0.0;  // reported aerial pose vs truth
  double pose_angle_sigma_deg = 0.0;
  double sighting_sigma = 0.0;       // local tag vectors
};

struct SceneSpec {
  std::vector<TagPlacement> tags;
  std::vector<Box> buildings;
  FlightPlan flight;
  WalkPlan walk;
  NoiseModel noise;
  std::uint64_t seed = 42;
  int tie_points = 50;
  RigidTransform local_to_world;
  bool collinear_tags = false;  // deliberately degenerate layout

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
    if (!(flight.altitude_m > 0.0)) fail("altitude must be positive");
    if (!(flight.overlap >= 0.0 && flight.overlap < 1.0)) fail("overlap must lie in [0, 1)");
    if (flight.strips < 1 || flight.images_per_strip < 1) fail("flight plan needs at least one image");
    if (tie_points < 0) fail("tie point count must be non-negative");
    if (!walk.waypoints.empty() && walk.waypoints.size() < 2) fail("walk needs at least two waypoints");
    if (!(walk.speed_mps > 0.0) || !(walk.sample_rate_hz > 0.0)) fail("walk speed and rate must be positive");
    if (noise.pixel_sigma < 0.0 || noise.pose_position_sigma < 0.0 || noise.pose_angle_sigma_deg < 0.0 ||
        noise.sighting_sigma < 0.0) {
      fail("noise levels must be non-negative");
    }
    std::map<std::int64_t, int> ids;
    for (const auto& t : tags) {
      if (++ids[t.id] > 1) fail("duplicate tag id " + std::to_string(t.id));
    }
  }
};

/// Seven tags in front of a single building, a five-image strip at 100 m and
/// a 100 m walk that starts at the tags and ends inside the building.
inline SceneSpec default_spec(std::uint64_t seed = 42) {
  SceneSpec s;
  s.seed = seed;
  s.tags = {{1, {-6.0, 2.0, 0.05}}, {2, {-2.5, 4.5, 0.0}}, {3, {1.0, 1.5, 0.10}}, {4, {4.5, 5.0, 0.02}},
            {5, {7.0, 2.5, 0.08}},  {6, {-4.0, 7.0, 0.15}}, {7, {2.5, 8.0, 0.04}}};
  s.buildings = {{{-15.0, 12.0, 0.0}, {20.0, 30.0, 8.0}}};
  s.walk.waypoints = {{-10.0, -1.0, 1.7}, {10.0, -1.0, 1.7}, {10.0, 14.0, 1.7},
                      {-20.0, 14.0, 1.7}, {-20.0, 24.0, 1.7}, {5.0, 24.0, 1.7}};
  RigidTransform t;
  t.rotation = rotation_z(deg_to_rad(35.0)) * rotation_x(deg_to_rad(0.3));
  t.translation = Vec3(-11.0, -2.5, 0.4);
  s.local_to_world = t;
  return s;
}

struct Scene {
  std::map<std::int64_t, Vec3> tags;               // truth, world frame
  std::map<std::string, Pose> aerial_poses;        // truth
  std::map<std::string, Pose> reported_poses;      // with pose noise
  std::map<std::int64_t, Vec3> tie_points;         // truth, world frame
  Trajectory world_trajectory;                     // truth
  Trajectory local_trajectory;                     // as navigated in the local frame
  RigidTransform local_to_world;
  std::vector<LocalTagSighting> sightings;

  std::vector<TagLandmark> truth_landmarks() const {
    std::vector<TagLandmark> out;
    for (const auto& [id, p] : tags) out.push_back({id, p, 0.0, 0});
    return out;
  }
};

/// Camera looking horizontally along `heading` (radians from +X) with image
/// up along world +Z.
inline Pose forward_looking_pose(const Vec3& centre, double heading) {
  const Vec3 forward(std::cos(heading), std::sin(heading), 0.0);
  const Vec3 up = Vec3::UnitZ();
  const Vec3 right = forward.cross(up);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = up;
  r.col(2) = -forward;
  return Pose::from_rotation(centre, r);
}

inline Scene gen_scene(const SceneSpec& spec, const CameraIntrinsics& aerial = CameraIntrinsics::aerial_default()) {
  spec.validate();
  aerial.validate();
  Scene scene;
  scene.local_to_world = spec.local_to_world;

  // Tags.
  Vec3 centre = Vec3::Zero();
  if (spec.collinear_tags) {
    for (std::size_t i = 0; i < spec.tags.size(); ++i) {
      const double s = static_cast<double>(i) * 2.5;
      scene.tags[spec.tags[i].id] = Vec3(-6.0 + s, 2.0 + 0.5 * s, 0.0);
    }
  } else {
    for (const auto& t : spec.tags) scene.tags[t.id] = t.position;
  }
  for (const auto& [id, p] : scene.tags) centre += p;
  if (!scene.tags.empty()) centre /= static_cast<double>(scene.tags.size());

  // Aerial strips, centred over the tags.
  const double scale = spec.flight.altitude_m / aerial.f_mm;
  const double footprint_x = aerial.width_px * aerial.pixel_pitch_mm * scale;
  const double footprint_y = aerial.height_px * aerial.pixel_pitch_mm * scale;
  const double base_x = (1.0 - spec.flight.overlap) * footprint_x;
  const double base_y = (1.0 - spec.flight.overlap) * footprint_y;
  Rng pose_rng(sub_seed(spec.seed, 1));
  const double jitter = deg_to_rad(spec.flight.attitude_jitter_deg);
  for (int s = 0; s < spec.flight.strips; ++s) {
    for (int i = 0; i < spec.flight.images_per_strip; ++i) {
      const double ox = (i - 0.5 * (spec.flight.images_per_strip - 1)) * base_x;
      const double oy = (s - 0.5 * (spec.flight.strips - 1)) * base_y;
      Pose p;
      p.t = centre + Vec3(ox, oy, spec.flight.altitude_m);
      p.r = Vec3(pose_rng.uniform(-jitter, jitter), pose_rng.uniform(-jitter, jitter),
                 pose_rng.uniform(-jitter, jitter));
      char id[32];
      std::snprintf(id, sizeof id, "IMG_%02d_%03d", s, i);
      scene.aerial_poses[id] = p;
    }
  }
  Rng report_rng(sub_seed(spec.seed, 2));
  const double angle_sigma = deg_to_rad(spec.noise.pose_angle_sigma_deg);
  for (const auto& [id, p] : scene.aerial_poses) {
    Pose q = p;
    for (int k = 0; k < 3; ++k) q.t(k) += report_rng.normal(spec.noise.pose_position_sigma);
    for (int k = 0; k < 3; ++k) q.r(k) += report_rng.normal(angle_sigma);
    scene.reported_poses[id] = q;
  }

  // Tie points on the ground and on roofs, inside the common footprint.
  Rng tie_rng(sub_seed(spec.seed, 3));
  const double half_x = std::max(2.0, 0.5 * footprint_x - 0.5 * (spec.flight.images_per_strip - 1) * base_x) * 0.8;
  const double half_y = std::max(2.0, 0.5 * footprint_y - 0.5 * (spec.flight.strips - 1) * base_y) * 0.8;
  for (int i = 0; i < spec.tie_points; ++i) {
    Vec3 p(centre.x() + tie_rng.uniform(-half_x, half_x), centre.y() + tie_rng.uniform(-half_y, half_y), 0.0);
    p.z() = tie_rng.uniform(-0.3, 0.3);
    for (const auto& b : spec.buildings) {
      if (p.x() >= b.min.x() && p.x() <= b.max.x() && p.y() >= b.min.y() && p.y() <= b.max.y()) {
        p.z() = b.max.z() + tie_rng.uniform(-0.2, 0.2);
      }
    }
    scene.tie_points[i + 1] = p;
  }

  // Walk: constant speed along the polyline, camera looking along the path.
  const RigidTransform world_to_local = spec.local_to_world.inverse();
  if (spec.walk.waypoints.size() >= 2) {
    std::vector<double> cumulative{0.0};
    for (std::size_t i = 1; i < spec.walk.waypoints.size(); ++i) {
      cumulative.push_back(cumulative.back() + (spec.walk.waypoints[i] - spec.walk.waypoints[i - 1]).norm());
    }
    const double total = cumulative.back();
    const double dt = 1.0 / spec.walk.sample_rate_hz;
    const auto n = static_cast<std::size_t>(std::floor(total / spec.walk.speed_mps / dt)) + 1;
    std::vector<TrajectorySample> world, local;
    std::size_t seg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ts = static_cast<double>(i) * dt;
      const double dist = std::min(ts * spec.walk.speed_mps, total);
      while (seg + 2 < cumulative.size() && dist > cumulative[seg + 1]) ++seg;
      const Vec3& a = spec.walk.waypoints[seg];
      const Vec3& b = spec.walk.waypoints[seg + 1];
      const double len = cumulative[seg + 1] - cumulative[seg];
      const double f = len > 0.0 ? (dist - cumulative[seg]) / len : 0.0;
      const Vec3 dir = b - a;
      const Pose pose = forward_looking_pose(a + f * dir, std::atan2(dir.y(), dir.x()));
      world.push_back({ts, pose});
      local.push_back({ts, transform_pose(world_to_local, pose)});
    }
    scene.world_trajectory = Trajectory(std::move(world));
    scene.local_trajectory = Trajectory(std::move(local));

    Rng sight_rng(sub_seed(spec.seed, 4));
    const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                    std::lround(spec.walk.sighting_interval_s * spec.walk.sample_rate_hz)));
    for (std::size_t i = 0; i < scene.world_trajectory.size(); i += every) {
      const auto& sample = scene.world_trajectory[i];
      const Vec3 forward = -sample.pose.rotation().col(2);
      for (const auto& [id, p] : scene.tags) {
        const Vec3 d = p - sample.pose.t;
        if (d.norm() > spec.walk.sighting_range_m || d.dot(forward) <= 0.0) continue;
        Vec3 v = apply_transform(world_to_local, p);
        for (int k = 0; k < 3; ++k) v(k) += sight_rng.normal(spec.noise.sighting_sigma);
        scene.sightings.push_back({sample.timestamp, id, v});
      }
    }
  }
  return scene;
}

struct RenderedObservations {
  std::vector<TagObservation> tags;
  std::vector<ImageMeasurement> tie_points;
};

/// Projects every truth tag and tie point into every aerial image in which it
/// is visible, adding Gaussian pixel noise.
inline RenderedObservations render_observations(const Scene& scene, const CameraIntrinsics& intrinsics,
                                                double pixel_sigma, std::uint64_t seed) {
  RenderedObservations out;
  Rng rng(sub_seed(seed, 10));
  for (const auto& [image_id, pose] : scene.aerial_poses) {
    for (const auto& [tag_id, p] : scene.tags) {
      auto px = project(intrinsics, pose, p);
      if (!px || !intrinsics.in_bounds(*px)) continue;
      const Vec2 noisy = *px + Vec2(rng.normal(pixel_sigma), rng.normal(pixel_sigma));
      out.tags.push_back({image_id, tag_id, noisy, 1.0});
    }
    for (const auto& [point_id, p] : scene.tie_points) {
      auto px = project(intrinsics, pose, p);
      if (!px || !intrinsics.in_bounds(*px)) continue;
      const Vec2 noisy = *px + Vec2(rng.normal(pixel_sigma), rng.normal(pixel_sigma));
      out.tie_points.push_back({image_id, point_id, noisy});
    }
  }
  return out;
}

struct StereoPair {
  GrayImage left;
  GrayImage right;
  Raster<float> disparity;         // truth, left-image based
  Raster<std::uint8_t> occluded;   // 1 where the left pixel has no visible match
};

/// Random-dot stereo pair for a per-pixel truth depth map of the left image.
/// Disparity is f * B / (Z * pitch); the right image is the left texture
/// forward-warped with a z-buffer, and right pixels that see no left surface
/// are filled with independent noise.
inline StereoPair gen_stereo_pair(const Raster<double>& depth, double baseline_m, const CameraIntrinsics& intrinsics,
                                  std::uint64_t texture_seed) {
  if (!(baseline_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "baseline must be positive");
  for (double z : depth.data) {
    if (!(z > 0.0)) throw Error(ErrorCode::InvalidArgument, "depths must be positive");
  }
  const int w = depth.width, h = depth.height;
  const double fb = intrinsics.focal_px() * baseline_m;

  StereoPair out{GrayImage(w, h, 0), GrayImage(w, h, 0), Raster<float>(w, h, 0.0f), Raster<std::uint8_t>(w, h, 0)};
  Rng tex(sub_seed(texture_seed, 20));
  for (auto& v : out.left.data) v = static_cast<std::uint16_t>(tex.below(256));
  for (std::size_t i = 0; i < depth.data.size(); ++i) out.disparity.data[i] = static_cast<float>(fb / depth.data[i]);

  Rng fill(sub_seed(texture_seed, 21));
  std::vector<double> zbuf(w);
  std::vector<double> src(w);
  for (int y = 0; y < h; ++y) {
    std::fill(zbuf.begin(), zbuf.end(), -1.0);
    std::fill(src.begin(), src.end(), -1.0);
    auto disp = [&](int x) { return static_cast<double>(out.disparity(x, y)); };
    auto splat = [&](int xr, double xl, double d) {
      if (xr < 0 || xr >= w) return;
      if (d > zbuf[xr]) {
        zbuf[xr] = d;
        src[xr] = xl;
      }
    };
    for (int x = 0; x < w; ++x) {
      const double s0 = x - disp(x);
      if (std::abs(s0 - std::round(s0)) < 1e-9) splat(static_cast<int>(std::lround(s0)), x, disp(x));
      if (x + 1 >= w || std::abs(disp(x + 1) - disp(x)) >= 1.0) continue;  // surface break
      const double s1 = (x + 1) - disp(x + 1);
      const double lo = std::min(s0, s1), hi = std::max(s0, s1);
      for (int xr = static_cast<int>(std::ceil(lo)); xr <= static_cast<int>(std::floor(hi)); ++xr) {
        const double a = hi > lo ? (xr - s0) / (s1 - s0) : 0.0;
        splat(xr, x + a, disp(x) + a * (disp(x + 1) - disp(x)));
      }
    }
    for (int xr = 0; xr < w; ++xr) {
      if (src[xr] < 0.0) {
        out.right(xr, y) = static_cast<std::uint16_t>(fill.below(256));
        continue;
      }
      const double xl = src[xr];
      const int x0 = std::clamp(static_cast<int>(std::floor(xl)), 0, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double a = xl - x0;
      const double v = (1.0 - a) * out.left(x0, y) + a * out.left(x1, y);
      out.right(xr, y) = static_cast<std::uint16_t>(std::lround(v));
    }
    for (int x = 0; x < w; ++x) {
      const double s = x - disp(x);
      bool occ = s < 0.0 || s > w - 1;
      if (!occ) {
        for (int xr : {static_cast<int>(std::floor(s)), static_cast<int>(std::ceil(s))}) {
          if (xr >= 0 && xr < w && zbuf[xr] > disp(x) + 0.5) occ = true;
        }
      }
      out.occluded(x, y) = occ ? 1 : 0;
    }
  }
  return out;
}

inline Raster<double> constant_depth(int width, int height, double depth) {
  return Raster<double>(width, height, depth);
}

/// Background plane with a fronto-parallel rectangle in front of it.
inline Raster<double> two_plane_depth(int width, int height, double background, double foreground, int x0, int y0,
                                      int x1, int y1) {
  Raster<double> d(width, height, background);
  for (int y = std::max(0, y0); y < std::min(height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(width, x1); ++x) d(x, y) = foreground;
  }
  return d;
}

/// Stereo camera used for the ground system fixtures: 640 x 480 px, 5.3 um.
inline CameraIntrinsics stereo_default() {
  CameraIntrinsics c;
  c.f_mm = 4.8;
  c.pixel_pitch_mm = 0.0053;
  c.width_px = 640;
  c.height_px = 480;
  c.x0_px = 319.5;
  c.y0_px = 239.5;
  return c;
}

/// Bundle problem from a scene: truth points observed by the aerial images.
inline BundleProblem bundle_problem(const Scene& scene, const CameraIntrinsics& intrinsics,
                                    const RenderedObservations& obs) {
  BundleProblem p;
  p.intrinsics = intrinsics;
  p.poses = scene.aerial_poses;
  p.points = scene.tie_points;
  p.measurements = obs.tie_points;
  return p;
}

}  // namespace seamless::synth

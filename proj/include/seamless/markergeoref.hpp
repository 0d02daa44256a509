#pragma once

// Triangulation of fiducial-tag centres from geo-referenced aerial images.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"

namespace seamless {

struct TagObservation {
  std::string image_id;
  std::int64_t tag_id = 0;
  Vec2 pixel = Vec2::Zero();
  double weight = 1.0;
};

struct TagLandmark {
  std::int64_t tag_id = 0;
  Vec3 position = Vec3::Zero();
  double rms_residual = 0.0;
  int n_rays = 0;
};

struct TriangulatedPoint {
  Vec3 position = Vec3::Zero();
  double rms_residual = 0.0;
  int n_rays = 0;  // rays kept after outlier rejection
};

struct TriangulationOptions {
  bool reject_outliers = true;
  double outlier_factor = 3.0;          // times the bundle RMS
  double max_condition_number = 1e8;
  double min_ray_angle_rad = 0.05 * std::numbers::pi / 180.0;
};

namespace detail {

inline TriangulatedPoint solve_rays(std::span<const Ray> rays, std::span<const double> weights,
                                    const std::vector<bool>& active, const TriangulationOptions& opts) {
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  int n = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!active[i]) continue;
    const Vec3& d = rays[i].direction;
    const Mat3 proj = Mat3::Identity() - d * d.transpose();
    a += weights[i] * proj;
    b += weights[i] * (proj * rays[i].origin);
    ++n;
  }
  if (n < 2) throw Error(ErrorCode::InsufficientObservations, "at least two rays are required");

  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > opts.max_condition_number) {
    throw Error(ErrorCode::DegenerateGeometry, "ray bundle is ill-conditioned (near-parallel rays)");
  }
  TriangulatedPoint out;
  out.position = a.ldlt().solve(b);
  double sum_sq = 0.0, sum_w = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!active[i]) continue;
    const double dist = rays[i].distance_to(out.position);
    sum_sq += weights[i] * dist * dist;
    sum_w += weights[i];
  }
  out.rms_residual = std::sqrt(sum_sq / sum_w);  // weighted; equals the plain RMS for unit weights
  out.n_rays = n;
  return out;
}

}  // namespace detail

/// Weighted least-squares intersection of a ray bundle (minimizes the sum of
/// squared perpendicular distances). One outlier pass: rays farther than
/// outlier_factor * RMS are dropped and the system is solved again.
inline TriangulatedPoint triangulate_point(std::span<const Ray> rays, std::span<const double> weights,
                                           const TriangulationOptions& opts = {}) {
  if (rays.size() < 2) throw Error(ErrorCode::InsufficientObservations, "at least two rays are required");
  if (weights.size() != rays.size()) {
    throw Error(ErrorCode::InvalidArgument, "one weight per ray is required");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidArgument, "ray weights must be positive");
  }

  const double cos_limit = std::cos(opts.min_ray_angle_rad);
  bool spread = false;
  for (std::size_t i = 0; i < rays.size() && !spread; ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      if (std::abs(rays[i].direction.dot(rays[j].direction)) < cos_limit) {
        spread = true;
        break;
      }
    }
  }
  if (!spread) throw Error(ErrorCode::DegenerateGeometry, "all rays are near-parallel");

  std::vector<bool> active(rays.size(), true);
  TriangulatedPoint first = detail::solve_rays(rays, weights, active, opts);
  if (!opts.reject_outliers || first.rms_residual == 0.0) return first;

  const double limit = opts.outlier_factor * first.rms_residual;
  int kept = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    active[i] = rays[i].distance_to(first.position) <= limit;
    kept += active[i] ? 1 : 0;
  }
  if (kept == static_cast<int>(rays.size()) || kept < 2) return first;
  return detail::solve_rays(rays, weights, active, opts);
}

inline TriangulatedPoint triangulate_point(std::span<const Ray> rays, const TriangulationOptions& opts = {}) {
  const std::vector<double> ones(rays.size(), 1.0);
  return triangulate_point(rays, ones, opts);
}

struct TagFailure {
  std::int64_t tag_id = 0;
  ErrorCode code = ErrorCode::InsufficientObservations;
  std::string message;
};

struct TagTriangulation {
  std::vector<TagLandmark> landmarks;  // ascending tag_id
  std::vector<TagFailure> failures;
};

/// Groups observations by tag id and triangulates each tag independently.
/// Tags that cannot be triangulated are listed in `failures`; a missing pose
/// for any observation aborts the whole call.
inline TagTriangulation triangulate_tags(std::span<const TagObservation> observations,
                                         const std::map<std::string, Pose>& poses,
                                         const CameraIntrinsics& intrinsics,
                                         const TriangulationOptions& opts = {}) {
  std::map<std::int64_t, std::vector<const TagObservation*>> by_tag;
  for (const auto& obs : observations) {
    if (!poses.contains(obs.image_id)) {
      throw Error(ErrorCode::MissingPose, "no pose for image '" + obs.image_id + "'");
    }
    if (!(obs.weight > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "observation weight must be positive");
    }
    by_tag[obs.tag_id].push_back(&obs);
  }

  TagTriangulation result;
  for (const auto& [tag_id, group] : by_tag) {
    try {
      std::vector<Ray> rays;
      std::vector<double> weights;
      rays.reserve(group.size());
      for (const TagObservation* obs : group) {
        rays.push_back(pixel_to_ray(intrinsics, poses.at(obs->image_id), obs->pixel));
        weights.push_back(obs->weight);
      }
      const TriangulatedPoint p = triangulate_point(rays, weights, opts);
      result.landmarks.push_back({tag_id, p.position, p.rms_residual, p.n_rays});
    } catch (const Error& e) {
      result.failures.push_back({tag_id, e.code(), e.what()});
    }
  }
  return result;
}

}  // namespace seamless

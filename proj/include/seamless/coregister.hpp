#pragma once

// Alignment of the locally navigated frame to world coordinates using tag
// landmarks seen from both the air and the ground.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"
#include "seamless/markergeoref.hpp"

namespace seamless {

struct LocalTagSighting {
  double timestamp = 0.0;
  std::int64_t tag_id = 0;
  Vec3 local_vector = Vec3::Zero();
};

struct TrajectorySample {
  double timestamp = 0.0;
  Pose pose;
};

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (!(samples_[i].timestamp > samples_[i - 1].timestamp)) {
        throw Error(ErrorCode::InvalidArgument, "trajectory timestamps must be strictly increasing");
      }
    }
  }

  const std::vector<TrajectorySample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TrajectorySample& operator[](std::size_t i) const { return samples_[i]; }

  /// Translation linearly interpolated between the bracketing samples,
  /// rotation taken from the nearest one. The nearest sample must lie within
  /// `tolerance` seconds.
  Pose pose_at(double timestamp, double tolerance = 0.1) const {
    if (samples_.empty()) throw Error(ErrorCode::TimestampOutOfRange, "empty trajectory");
    auto it = std::lower_bound(samples_.begin(), samples_.end(), timestamp,
                               [](const TrajectorySample& s, double t) { return s.timestamp < t; });
    if (it == samples_.begin() || it == samples_.end()) {
      const TrajectorySample& edge = it == samples_.end() ? samples_.back() : samples_.front();
      if (std::abs(edge.timestamp - timestamp) > tolerance) {
        throw Error(ErrorCode::TimestampOutOfRange, "timestamp outside trajectory");
      }
      return edge.pose;
    }
    const TrajectorySample& hi = *it;
    const TrajectorySample& lo = *(it - 1);
    const double gap_lo = timestamp - lo.timestamp;
    const double gap_hi = hi.timestamp - timestamp;
    if (std::min(gap_lo, gap_hi) > tolerance) {
      throw Error(ErrorCode::TimestampOutOfRange, "no trajectory sample near timestamp");
    }
    const double a = gap_lo / (hi.timestamp - lo.timestamp);
    Pose p;
    p.t = (1.0 - a) * lo.pose.t + a * hi.pose.t;
    p.r = gap_lo <= gap_hi ? lo.pose.r : hi.pose.r;
    return p;
  }

 private:
  std::vector<TrajectorySample> samples_;
};

/// Expresses a camera-frame range vector to a tag in the trajectory's local
/// frame, using the pose at the sighting time.
inline LocalTagSighting sighting_from_camera_vector(const Trajectory& local_trajectory, double timestamp,
                                                    std::int64_t tag_id, const Vec3& camera_vector,
                                                    double tolerance = 0.1) {
  const Pose pose = local_trajectory.pose_at(timestamp, tolerance);
  return {timestamp, tag_id, pose.camera_to_world(camera_vector)};
}

struct Correspondence {
  std::int64_t tag_id = 0;
  Vec3 local = Vec3::Zero();
  Vec3 world = Vec3::Zero();
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;         // ascending tag_id
  std::vector<std::int64_t> unmatched_tags;  // sighted but without landmark
};

/// Matches sightings to landmarks by tag id; repeated sightings of a tag are
/// averaged in the local frame.
inline CorrespondenceSet collect_correspondences(std::span<const LocalTagSighting> sightings,
                                                 std::span<const TagLandmark> landmarks) {
  std::map<std::int64_t, Vec3> world;
  for (const auto& lm : landmarks) world[lm.tag_id] = lm.position;

  std::map<std::int64_t, std::pair<Vec3, int>> local;
  for (const auto& s : sightings) {
    auto& acc = local.try_emplace(s.tag_id, Vec3::Zero(), 0).first->second;
    acc.first += s.local_vector;
    acc.second += 1;
  }

  CorrespondenceSet out;
  for (const auto& [tag_id, acc] : local) {
    auto it = world.find(tag_id);
    if (it == world.end()) {
      out.unmatched_tags.push_back(tag_id);
      continue;
    }
    out.pairs.push_back({tag_id, acc.first / acc.second, it->second});
  }
  return out;
}

struct RegistrationOptions {
  bool estimate_scale = false;
  bool robust = true;
  double outlier_factor = 3.0;        // times the median residual
  double outlier_floor_m = 1e-3;      // residuals below this are never outliers
  double min_spread_ratio = 1e-6;     // second / first principal spread
  double reflection_ratio = 1e-2;     // sigma3 / sigma2 above which a reflection is real
};

struct RegistrationResult {
  RigidTransform transform;
  std::vector<double> residuals;          // per input pair, world-frame metres
  std::vector<std::int64_t> dropped_tags;  // removed by the robustness pass
  double rms = 0.0;
};

namespace detail {

inline RigidTransform procrustes(std::span<const Correspondence> pairs, const std::vector<bool>& active,
                                 const RegistrationOptions& opts) {
  int n = 0;
  Vec3 mean_local = Vec3::Zero(), mean_world = Vec3::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!active[i]) continue;
    mean_local += pairs[i].local;
    mean_world += pairs[i].world;
    ++n;
  }
  if (n < 3) throw Error(ErrorCode::TooFewCorrespondences, "at least three tag correspondences are required");
  mean_local /= n;
  mean_world /= n;

  Mat3 cov = Mat3::Zero();
  Mat3 local_scatter = Mat3::Zero();
  double local_var = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!active[i]) continue;
    const Vec3 l = pairs[i].local - mean_local;
    const Vec3 w = pairs[i].world - mean_world;
    cov += w * l.transpose();
    local_scatter += l * l.transpose();
    local_var += l.squaredNorm();
  }

  // Rotation about a line through collinear points is unobservable.
  Eigen::SelfAdjointEigenSolver<Mat3> spread(local_scatter);
  const Vec3 ev = spread.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || std::sqrt(std::max(ev(1), 0.0) / ev(2)) <= opts.min_spread_ratio) {
    throw Error(ErrorCode::DegenerateGeometry, "tag positions are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    if (sigma(2) > opts.reflection_ratio * sigma(1)) {
      throw Error(ErrorCode::ReflectionRequired,
                  "correspondences are mirror-imaged; check tag ids");
    }
    s(2, 2) = -1.0;
  }

  RigidTransform t;
  t.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  if (opts.estimate_scale) t.scale = (sigma.asDiagonal() * s).trace() / local_var;
  t.translation = mean_world - t.scale * (t.rotation * mean_local);
  return t;
}

}  // namespace detail

/// Closed-form least-squares alignment local -> world (SVD, reflection
/// corrected). One robustness pass drops pairs whose residual exceeds
/// outlier_factor times the median and solves again.
inline RegistrationResult estimate_rigid_transform(std::span<const Correspondence> pairs,
                                                   const RegistrationOptions& opts = {}) {
  if (pairs.size() < 3) {
    throw Error(ErrorCode::TooFewCorrespondences, "at least three tag correspondences are required");
  }
  std::vector<bool> active(pairs.size(), true);
  RegistrationResult out;
  out.transform = detail::procrustes(pairs, active, opts);

  auto residuals_of = [&](const RigidTransform& t) {
    std::vector<double> r(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      r[i] = (apply_transform(t, pairs[i].local) - pairs[i].world).norm();
    }
    return r;
  };
  out.residuals = residuals_of(out.transform);

  if (opts.robust && pairs.size() > 3) {
    std::vector<double> sorted = out.residuals;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double limit = std::max(opts.outlier_factor * median, opts.outlier_floor_m);
    std::vector<std::int64_t> dropped;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (out.residuals[i] > limit) {
        active[i] = false;
        dropped.push_back(pairs[i].tag_id);
      }
    }
    if (!dropped.empty() && pairs.size() - dropped.size() >= 3) {
      try {
        out.transform = detail::procrustes(pairs, active, opts);
        out.residuals = residuals_of(out.transform);
        out.dropped_tags = std::move(dropped);
      } catch (const Error&) {
        // The reduced set is degenerate; keep the full-set solution.
      }
    }
  }

  double sum_sq = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!active[i] && !out.dropped_tags.empty()) continue;
    sum_sq += out.residuals[i] * out.residuals[i];
    ++n;
  }
  out.rms = n > 0 ? std::sqrt(sum_sq / n) : 0.0;
  return out;
}

inline Trajectory apply_to_trajectory(const RigidTransform& t, const Trajectory& trajectory) {
  std::vector<TrajectorySample> out;
  out.reserve(trajectory.size());
  for (const auto& s : trajectory.samples()) out.push_back({s.timestamp, transform_pose(t, s.pose)});
  return Trajectory(std::move(out));
}

}  // namespace seamless

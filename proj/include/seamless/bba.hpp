#pragma once

// Bundle block adjustment: Levenberg-Marquardt on the reprojection error with
// a numerically differentiated, dense Jacobian.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"

namespace seamless {

struct ImageMeasurement {
  std::string image_id;
  std::int64_t point_id = 0;
  Vec2 pixel = Vec2::Zero();
};

/// Which parameter blocks the adjustment may change.
struct ParameterMask {
  bool poses = true;
  bool points = true;
  bool focal = false;
  bool principal_point = false;
  bool distortion = false;
};

struct BundleProblem {
  CameraIntrinsics intrinsics;
  std::map<std::string, Pose> poses;
  std::map<std::int64_t, Vec3> points;
  std::vector<ImageMeasurement> measurements;
  ParameterMask mask;
  std::set<std::string> anchors;  // poses held fixed

  void validate() const {
    intrinsics.validate();
    for (const auto& m : measurements) {
      if (!poses.contains(m.image_id)) {
        throw Error(ErrorCode::MissingPose, "measurement references unknown image '" + m.image_id + "'");
      }
      if (!points.contains(m.point_id)) {
        throw Error(ErrorCode::InvalidArgument,
                    "measurement references unknown point " + std::to_string(m.point_id));
      }
    }
    for (const auto& a : anchors) {
      if (!poses.contains(a)) throw Error(ErrorCode::InvalidArgument, "anchor '" + a + "' is not a pose");
    }
  }
};

struct ResidualSet {
  Eigen::VectorXd residuals;  // 2 entries per measurement: observed - predicted
  double rms = 0.0;
  std::vector<std::size_t> behind_camera;  // measurement indices
};

constexpr double kBehindCameraResidual = 1e6;
constexpr double kMaxAbsPhiRad = 89.0 * std::numbers::pi / 180.0;

inline ResidualSet reprojection_residuals(const BundleProblem& problem) {
  ResidualSet out;
  out.residuals.resize(2 * static_cast<Eigen::Index>(problem.measurements.size()));
  for (std::size_t i = 0; i < problem.measurements.size(); ++i) {
    const auto& m = problem.measurements[i];
    const auto px = project(problem.intrinsics, problem.poses.at(m.image_id), problem.points.at(m.point_id));
    Vec2 r;
    if (px) {
      r = m.pixel - *px;
    } else {
      r = Vec2::Constant(kBehindCameraResidual);
      out.behind_camera.push_back(i);
    }
    out.residuals.segment<2>(2 * static_cast<Eigen::Index>(i)) = r;
  }
  out.rms = problem.measurements.empty()
                ? 0.0
                : std::sqrt(out.residuals.squaredNorm() / static_cast<double>(out.residuals.size()));
  return out;
}

/// Maps between a BundleProblem and the flat vector of free parameters.
class ParameterLayout {
 public:
  explicit ParameterLayout(const BundleProblem& problem) {
    const auto& mask = problem.mask;
    if (mask.poses) {
      for (const auto& [id, pose] : problem.poses) {
        if (problem.anchors.contains(id)) continue;
        pose_offset_[id] = size_;
        size_ += 6;
      }
    }
    if (mask.points) {
      for (const auto& [id, p] : problem.points) {
        point_offset_[id] = size_;
        size_ += 3;
      }
    }
    if (mask.focal) focal_offset_ = size_++;
    if (mask.principal_point) {
      pp_offset_ = size_;
      size_ += 2;
    }
    if (mask.distortion && !problem.intrinsics.k.empty()) {
      k_offset_ = size_;
      k_count_ = static_cast<int>(problem.intrinsics.k.size());
      size_ += k_count_;
    }
  }

  int size() const { return size_; }

  int pose_offset(const std::string& id) const {
    auto it = pose_offset_.find(id);
    return it == pose_offset_.end() ? -1 : it->second;
  }
  int point_offset(std::int64_t id) const {
    auto it = point_offset_.find(id);
    return it == point_offset_.end() ? -1 : it->second;
  }
  /// Parameters shared by all measurements (interior orientation).
  std::vector<int> shared_indices() const {
    std::vector<int> idx;
    if (focal_offset_ >= 0) idx.push_back(focal_offset_);
    if (pp_offset_ >= 0) {
      idx.push_back(pp_offset_);
      idx.push_back(pp_offset_ + 1);
    }
    for (int i = 0; i < k_count_; ++i) idx.push_back(k_offset_ + i);
    return idx;
  }

  Eigen::VectorXd pack(const BundleProblem& p) const {
    Eigen::VectorXd x(size_);
    for (const auto& [id, off] : pose_offset_) {
      const Pose& pose = p.poses.at(id);
      x.segment<3>(off) = pose.t;
      x.segment<3>(off + 3) = pose.r;
    }
    for (const auto& [id, off] : point_offset_) x.segment<3>(off) = p.points.at(id);
    if (focal_offset_ >= 0) x(focal_offset_) = p.intrinsics.f_mm;
    if (pp_offset_ >= 0) {
      x(pp_offset_) = p.intrinsics.x0_px;
      x(pp_offset_ + 1) = p.intrinsics.y0_px;
    }
    for (int i = 0; i < k_count_; ++i) x(k_offset_ + i) = p.intrinsics.k[i];
    return x;
  }

  void unpack(const Eigen::VectorXd& x, BundleProblem& p) const {
    for (const auto& [id, off] : pose_offset_) {
      Pose& pose = p.poses.at(id);
      pose.t = x.segment<3>(off);
      pose.r = x.segment<3>(off + 3);
    }
    for (const auto& [id, off] : point_offset_) p.points.at(id) = x.segment<3>(off);
    if (focal_offset_ >= 0) p.intrinsics.f_mm = x(focal_offset_);
    if (pp_offset_ >= 0) {
      p.intrinsics.x0_px = x(pp_offset_);
      p.intrinsics.y0_px = x(pp_offset_ + 1);
    }
    for (int i = 0; i < k_count_; ++i) p.intrinsics.k[i] = x(k_offset_ + i);
  }

  /// Writes parameter `index` into a copy-local state without touching others.
  void set_one(int index, double value, CameraIntrinsics& cam, Pose* pose, int pose_off, Vec3* point,
               int point_off) const {
    if (pose && pose_off >= 0 && index >= pose_off && index < pose_off + 6) {
      const int j = index - pose_off;
      if (j < 3) pose->t(j) = value;
      else pose->r(j - 3) = value;
    } else if (point && point_off >= 0 && index >= point_off && index < point_off + 3) {
      (*point)(index - point_off) = value;
    } else if (index == focal_offset_) {
      cam.f_mm = value;
    } else if (pp_offset_ >= 0 && index == pp_offset_) {
      cam.x0_px = value;
    } else if (pp_offset_ >= 0 && index == pp_offset_ + 1) {
      cam.y0_px = value;
    } else if (k_count_ > 0 && index >= k_offset_ && index < k_offset_ + k_count_) {
      cam.k[index - k_offset_] = value;
    }
  }

  bool phi_within_limits(const Eigen::VectorXd& x) const {
    for (const auto& [id, off] : pose_offset_) {
      if (!(std::abs(x(off + 4)) < kMaxAbsPhiRad)) return false;
    }
    return true;
  }

 private:
  std::map<std::string, int> pose_offset_;
  std::map<std::int64_t, int> point_offset_;
  int focal_offset_ = -1;
  int pp_offset_ = -1;
  int k_offset_ = -1;
  int k_count_ = 0;
  int size_ = 0;
};

namespace detail {

inline Vec2 measurement_residual(const CameraIntrinsics& cam, const Pose& pose, const Vec3& point,
                                 const Vec2& observed) {
  const auto px = project(cam, pose, point);
  return px ? Vec2(observed - *px) : Vec2::Constant(kBehindCameraResidual);
}

}  // namespace detail

/// Jacobian of the residual vector with respect to the free parameters, by
/// central differences with step relative_step * max(|x_j|, 1). Each
/// measurement is differentiated only against the blocks it depends on.
inline Eigen::MatrixXd numeric_jacobian(const BundleProblem& problem, const ParameterLayout& layout,
                                        double relative_step = 1e-7) {
  const auto n_res = 2 * static_cast<Eigen::Index>(problem.measurements.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_res, layout.size());
  const Eigen::VectorXd x = layout.pack(problem);
  const std::vector<int> shared = layout.shared_indices();

  for (std::size_t i = 0; i < problem.measurements.size(); ++i) {
    const auto& m = problem.measurements[i];
    const int pose_off = layout.pose_offset(m.image_id);
    const int point_off = layout.point_offset(m.point_id);
    std::vector<int> cols;
    if (pose_off >= 0) {
      for (int j = 0; j < 6; ++j) cols.push_back(pose_off + j);
    }
    if (point_off >= 0) {
      for (int j = 0; j < 3; ++j) cols.push_back(point_off + j);
    }
    cols.insert(cols.end(), shared.begin(), shared.end());

    for (int col : cols) {
      const double h = relative_step * std::max(std::abs(x(col)), 1.0);
      CameraIntrinsics cam = problem.intrinsics;
      Pose pose = problem.poses.at(m.image_id);
      Vec3 point = problem.points.at(m.point_id);
      layout.set_one(col, x(col) + h, cam, &pose, pose_off, &point, point_off);
      const Vec2 plus = detail::measurement_residual(cam, pose, point, m.pixel);
      layout.set_one(col, x(col) - h, cam, &pose, pose_off, &point, point_off);
      const Vec2 minus = detail::measurement_residual(cam, pose, point, m.pixel);
      jac.block<2, 1>(2 * static_cast<Eigen::Index>(i), col) = (plus - minus) / (2.0 * h);
    }
  }
  return jac;
}

struct SolveOptions {
  int max_iters = 100;
  double gradient_tol = 1e-10;
  double step_tol = 1e-12;
  double initial_lambda = 1e-3;
  double jacobian_step = 1e-7;
};

struct SolveReport {
  double initial_rms = 0.0;
  double final_rms = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string termination;
  std::vector<double> lambda_trace;
  std::vector<double> cost_trace;  // cost after every accepted step, starting with the initial cost
};

inline void check_well_posed(const BundleProblem& problem) {
  problem.validate();
  if (problem.mask.poses && problem.anchors.empty() && !problem.poses.empty()) {
    throw Error(ErrorCode::GaugeNotFixed, "all poses are free; anchor at least one pose");
  }
  if (problem.mask.points) {
    std::map<std::int64_t, std::set<std::string>> seen_by;
    for (const auto& m : problem.measurements) seen_by[m.point_id].insert(m.image_id);
    for (const auto& [id, p] : problem.points) {
      auto it = seen_by.find(id);
      if (it == seen_by.end() || it->second.size() < 2) {
        throw Error(ErrorCode::Underconstrained,
                    "point " + std::to_string(id) + " is seen in fewer than two images");
      }
    }
  }
  for (const auto& [id, pose] : problem.poses) {
    if (!problem.anchors.contains(id) && problem.mask.poses && !(std::abs(pose.r.y()) < kMaxAbsPhiRad)) {
      throw Error(ErrorCode::InvalidArgument, "pose '" + id + "' is too close to gimbal lock (|phi| >= 89 deg)");
    }
  }
}

/// Levenberg-Marquardt with Marquardt diagonal scaling. lambda starts at
/// initial_lambda, is multiplied by 10 on a rejected step and divided by 10
/// on an accepted one. The cost never increases.
inline std::pair<BundleProblem, SolveReport> solve(const BundleProblem& input, const SolveOptions& opts = {}) {
  check_well_posed(input);
  BundleProblem problem = input;
  const ParameterLayout layout(problem);
  SolveReport report;

  ResidualSet res = reprojection_residuals(problem);
  report.initial_rms = res.rms;
  report.final_rms = res.rms;
  double cost = res.residuals.squaredNorm();
  report.cost_trace.push_back(cost);
  if (layout.size() == 0 || problem.measurements.empty()) {
    report.converged = true;
    report.termination = "nothing to adjust";
    return {problem, report};
  }

  Eigen::VectorXd x = layout.pack(problem);
  double lambda = opts.initial_lambda;
  bool done = false;

  while (!done) {
    const Eigen::MatrixXd jac = numeric_jacobian(problem, layout, opts.jacobian_step);
    // r = observed - predicted, so J here is d(r)/dx and the GN step solves (J^T J) dx = -J^T r.
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd diag = normal.diagonal();
    if (diag.minCoeff() <= 0.0) {
      throw Error(ErrorCode::SingularNormalEquations, "a free parameter is not observed by any measurement");
    }
    const Eigen::VectorXd grad = jac.transpose() * res.residuals;
    if (grad.cwiseAbs().maxCoeff() < opts.gradient_tol) {
      report.converged = true;
      report.termination = "gradient tolerance";
      break;
    }

    while (true) {
      if (report.iterations >= opts.max_iters) {
        report.termination = "maximum iterations";
        done = true;
        break;
      }
      ++report.iterations;
      report.lambda_trace.push_back(lambda);

      Eigen::MatrixXd damped = normal;
      damped.diagonal() += lambda * diag;
      Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = llt.solve(-grad);
      if (!delta.allFinite()) {
        throw Error(ErrorCode::SingularNormalEquations, "normal equations produced a non-finite step");
      }
      if (delta.norm() < opts.step_tol * (x.norm() + opts.step_tol)) {
        report.converged = true;
        report.termination = "step tolerance";
        done = true;
        break;
      }

      const Eigen::VectorXd x_new = x + delta;
      bool accepted = false;
      if (layout.phi_within_limits(x_new)) {
        BundleProblem trial = problem;
        layout.unpack(x_new, trial);
        ResidualSet trial_res = reprojection_residuals(trial);
        const double trial_cost = trial_res.residuals.squaredNorm();
        if (trial_cost < cost) {
          problem = std::move(trial);
          res = std::move(trial_res);
          cost = trial_cost;
          x = x_new;
          accepted = true;
          report.cost_trace.push_back(cost);
        }
      }
      if (accepted) {
        lambda = std::max(lambda / 10.0, 1e-15);
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent possible at any damping: numerically at the minimum.
        report.converged = true;
        report.termination = "no further decrease";
        done = true;
        break;
      }
    }
  }

  report.final_rms = res.rms;
  return {problem, report};
}

}  // namespace seamless

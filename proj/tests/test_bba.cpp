#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "seamless/bba.hpp"
#include "seamless/coregister.hpp"
#include "seamless/random.hpp"
#include "seamless/synth.hpp"
#include "support.hpp"

using namespace seamless;
using seamless::testing::code_of;

namespace {

struct Block {
  BundleProblem truth;
  BundleProblem start;
};

// Six cameras in two strips of three over fifty tie points; two anchors.
Block six_camera_block(std::uint64_t seed, double pixel_sigma, double pos_perturb, double ang_perturb_deg) {
  auto spec = synth::default_spec(seed);
  spec.flight.strips = 2;
  spec.flight.images_per_strip = 3;
  spec.tie_points = 50;
  const auto cam = CameraIntrinsics::aerial_default();
  const auto scene = synth::gen_scene(spec, cam);
  const auto obs = synth::render_observations(scene, cam, pixel_sigma, seed);
  Block b;
  b.truth = synth::bundle_problem(scene, cam, obs);
  b.truth.anchors = {"IMG_00_000", "IMG_01_002"};
  b.start = b.truth;
  Rng rng(sub_seed(seed, 77));
  const double ang = deg_to_rad(ang_perturb_deg);
  for (auto& [id, pose] : b.start.poses) {
    if (b.start.anchors.contains(id)) continue;
    for (int k = 0; k < 3; ++k) pose.t(k) += rng.uniform() < 0.5 ? -pos_perturb : pos_perturb;
    for (int k = 0; k < 3; ++k) pose.r(k) += rng.uniform() < 0.5 ? -ang : ang;
  }
  return b;
}

// Analytic derivative of the predicted pixel with respect to the world point
// for a distortion-free camera, as an oracle for the point columns.
Eigen::Matrix<double, 2, 3> analytic_point_jacobian(const CameraIntrinsics& cam, const Pose& pose, const Vec3& p) {
  const Mat3 rt = pose.rotation().transpose();
  const Vec3 q = rt * (p - pose.t);
  const double fp = cam.focal_px();
  const double z = -q.z();
  Eigen::Matrix<double, 2, 3> dq;  // d(u, v) / d(q)
  dq << fp / z, 0, fp * q.x() / (z * z), 0, -fp / z, -fp * q.y() / (z * z);
  return dq * rt;
}

double cost_of(const BundleProblem& p) { return reprojection_residuals(p).residuals.squaredNorm(); }

}  // namespace

TEST(Residuals, ExactMeasurementsGiveZero) {
  const auto b = six_camera_block(1, 0.0, 0.0, 0.0);
  const auto r = reprojection_residuals(b.truth);
  EXPECT_EQ(r.residuals.size(), 2 * static_cast<Eigen::Index>(b.truth.measurements.size()));
  EXPECT_LT(r.residuals.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(r.behind_camera.empty());
}

TEST(Residuals, DisplacedPointFollowsSimilarTriangles) {
  BundleProblem p;
  p.intrinsics = CameraIntrinsics::aerial_default();
  p.poses["A"] = Pose{Vec3(0, 0, 100), Vec3::Zero()};
  p.points[1] = Vec3::Zero();
  p.measurements = {{"A", 1, *project(p.intrinsics, p.poses["A"], Vec3::Zero())}};
  const double delta = 0.01;
  p.points[1] = Vec3(delta, 0, 0);
  const auto r = reprojection_residuals(p);
  const double expected = 50.0 * delta / (100.0 * 0.0074);
  EXPECT_NEAR(std::abs(r.residuals(0)), expected, 1e-9);
  EXPECT_NEAR(r.residuals(1), 0.0, 1e-12);
}

TEST(Residuals, EmptyMeasurements) {
  BundleProblem p;
  p.intrinsics = CameraIntrinsics::aerial_default();
  const auto r = reprojection_residuals(p);
  EXPECT_EQ(r.residuals.size(), 0);
  EXPECT_EQ(r.rms, 0.0);
}

TEST(Residuals, BehindCameraGetsLargeResidual) {
  BundleProblem p;
  p.intrinsics = CameraIntrinsics::aerial_default();
  p.poses["A"] = Pose{Vec3(0, 0, 100), Vec3::Zero()};
  p.points[1] = Vec3(0, 0, 150);
  p.measurements = {{"A", 1, Vec2(10, 10)}};
  const auto r = reprojection_residuals(p);
  ASSERT_EQ(r.behind_camera.size(), 1u);
  EXPECT_EQ(r.residuals(0), kBehindCameraResidual);
}

TEST(Jacobian, AgreesAcrossStepSizes) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto b = six_camera_block(100 + trial, 0.3, 0.2, 0.2);
    b.start.mask.focal = true;
    b.start.mask.principal_point = true;
    b.start.intrinsics.k = {0.0, 0.02 * rng.uniform(), 0.0};
    b.start.mask.distortion = true;
    const ParameterLayout layout(b.start);
    const auto j1 = numeric_jacobian(b.start, layout, 1e-7);
    const auto j2 = numeric_jacobian(b.start, layout, 1e-5);
    EXPECT_LT((j1 - j2).norm() / j2.norm(), 1e-4);
    for (Eigen::Index c = 0; c < j2.cols(); ++c) {
      if (j2.col(c).norm() == 0.0) continue;
      EXPECT_LT((j1.col(c) - j2.col(c)).norm() / j2.col(c).norm(), 1e-4) << "column " << c;
    }
  }
}

TEST(Jacobian, PointColumnsMatchAnalyticDerivative) {
  const auto b = six_camera_block(7, 0.0, 0.3, 0.3);
  const ParameterLayout layout(b.start);
  const auto jac = numeric_jacobian(b.start, layout);
  for (std::size_t i = 0; i < b.start.measurements.size(); ++i) {
    const auto& m = b.start.measurements[i];
    // r = observed - predicted, hence the sign.
    const Eigen::Matrix<double, 2, 3> expected = -analytic_point_jacobian(b.start.intrinsics, b.start.poses.at(m.image_id),
                                                   b.start.points.at(m.point_id));
    const Eigen::Matrix<double, 2, 3> numeric = jac.block<2, 3>(2 * static_cast<Eigen::Index>(i), layout.point_offset(m.point_id));
    EXPECT_LT((numeric - expected).norm() / expected.norm(), 1e-7);
  }
}

TEST(Solve, AtTruthConvergesImmediately) {
  const auto b = six_camera_block(2, 0.0, 0.0, 0.0);
  const auto [out, report] = solve(b.truth);
  EXPECT_TRUE(report.converged);
  EXPECT_LE(report.iterations, 2);
  EXPECT_LT(report.final_rms, 1e-10);
}

TEST(Solve, RecoversPerturbedPoses) {
  const auto b = six_camera_block(3, 0.0, 0.5, 0.5);
  const auto [out, report] = solve(b.start);
  EXPECT_TRUE(report.converged) << report.termination;
  EXPECT_LT(report.final_rms, 1e-8);
  EXPECT_LE(report.iterations, 50);
  for (const auto& [id, pose] : out.poses) {
    const Pose& t = b.truth.poses.at(id);
    EXPECT_LT((pose.t - t.t).norm(), 1e-6) << id;
    EXPECT_LT((pose.rotation() - t.rotation()).cwiseAbs().maxCoeff(), 1e-7) << id;
  }
}

TEST(Solve, CostNeverIncreases) {
  const auto b = six_camera_block(4, 0.5, 0.5, 0.5);
  const auto [out, report] = solve(b.start);
  ASSERT_GE(report.cost_trace.size(), 2u);
  for (std::size_t i = 1; i < report.cost_trace.size(); ++i) {
    EXPECT_LE(report.cost_trace[i], report.cost_trace[i - 1]);
  }
  EXPECT_LE(report.final_rms, report.initial_rms);
  EXPECT_EQ(report.lambda_trace.size(), static_cast<std::size_t>(report.iterations));
  EXPECT_DOUBLE_EQ(report.lambda_trace.front(), 1e-3);
}

TEST(Solve, LambdaScheduleFollowsAcceptance) {
  const auto b = six_camera_block(5, 0.5, 0.5, 0.5);
  const auto [out, report] = solve(b.start);
  std::size_t accepted = 0;
  for (std::size_t i = 1; i < report.lambda_trace.size(); ++i) {
    const double ratio = report.lambda_trace[i] / report.lambda_trace[i - 1];
    const bool down = std::abs(ratio - 0.1) < 1e-12 || report.lambda_trace[i] == 1e-15;
    const bool up = std::abs(ratio - 10.0) < 1e-9;
    EXPECT_TRUE(down || up) << "ratio " << ratio;
    accepted += down ? 1 : 0;
  }
  EXPECT_LE(accepted + 1, report.cost_trace.size());
}

TEST(Solve, NoiseLevelMatchesRedundancy) {
  const double sigma = 0.5;
  double sum = 0.0;
  double expected = 0.0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    const auto b = six_camera_block(1000 + trial, sigma, 0.1, 0.1);
    const auto [out, report] = solve(b.start);
    const ParameterLayout layout(b.start);
    const double n_res = 2.0 * static_cast<double>(b.start.measurements.size());
    expected = sigma * std::sqrt(1.0 - layout.size() / n_res);
    sum += report.final_rms;
  }
  const double mean = sum / trials;
  EXPECT_NEAR(mean / expected, 1.0, 0.2);
}

TEST(Solve, GaugeConsistentUnderRigidMotion) {
  const auto b = six_camera_block(6, 0.5, 0.2, 0.2);
  RigidTransform t;
  t.rotation = rotation_z(0.4);
  t.translation = Vec3(120.0, -35.0, 4.0);
  BundleProblem moved = b.start;
  for (auto& [id, pose] : moved.poses) pose = transform_pose(t, pose);
  for (auto& [id, p] : moved.points) p = apply_transform(t, p);
  const auto [a, ra] = solve(b.start);
  const auto [c, rc] = solve(moved);
  const double ca = cost_of(a), cc = cost_of(c);
  EXPECT_LT(std::abs(ca - cc) / ca, 1e-10);
}

TEST(Solve, Errors) {
  auto b = six_camera_block(8, 0.0, 0.0, 0.0);
  BundleProblem no_gauge = b.truth;
  no_gauge.anchors.clear();
  EXPECT_EQ(code_of([&] { solve(no_gauge); }), ErrorCode::GaugeNotFixed);

  BundleProblem lonely = b.truth;
  lonely.points[999] = Vec3(0, 0, 0);
  lonely.measurements.push_back({"IMG_00_000", 999, Vec2(100, 100)});
  EXPECT_EQ(code_of([&] { solve(lonely); }), ErrorCode::Underconstrained);

  BundleProblem gimbal = b.truth;
  gimbal.poses["IMG_00_001"].r.y() = deg_to_rad(89.5);
  EXPECT_EQ(code_of([&] { solve(gimbal); }), ErrorCode::InvalidArgument);

  BundleProblem unknown = b.truth;
  unknown.measurements.push_back({"nope", 1, Vec2(1, 1)});
  EXPECT_EQ(code_of([&] { solve(unknown); }), ErrorCode::MissingPose);

}

TEST(Solve, SingularNormalEquations) {
  BundleProblem p;
  p.intrinsics = CameraIntrinsics::aerial_default();
  p.poses["A"] = Pose{Vec3(-10, 0, 100), Vec3::Zero()};
  p.poses["B"] = Pose{Vec3(10, 0, 100), Vec3::Zero()};
  p.poses["C"] = Pose{Vec3(0, 10, 100), Vec3::Zero()};
  for (int i = 0; i < 6; ++i) p.points[i] = Vec3(i - 3.0, 0.5 * i, 0.0);
  for (const auto& id : {"A", "B"}) {
    for (const auto& [pid, pt] : p.points) p.measurements.push_back({id, pid, *project(p.intrinsics, p.poses[id], pt)});
  }
  p.anchors = {"A", "B"};  // C is free but never observed
  EXPECT_EQ(code_of([&] { solve(p); }), ErrorCode::SingularNormalEquations);
}

TEST(Solve, FrozenBlocksStayPut) {
  const auto b = six_camera_block(9, 0.3, 0.0, 0.0);
  BundleProblem p = b.start;
  p.mask.poses = false;
  const auto [out, report] = solve(p);
  for (const auto& [id, pose] : out.poses) {
    EXPECT_EQ(pose.t, p.poses.at(id).t);
    EXPECT_EQ(pose.r, p.poses.at(id).r);
  }
  EXPECT_LE(report.final_rms, report.initial_rms);
}

TEST(Solve, RefinesFocalLengthWhenFreed) {
  const auto b = six_camera_block(10, 0.0, 0.05, 0.05);
  BundleProblem p = b.start;
  p.mask.focal = true;
  p.intrinsics.f_mm = 50.05;
  const auto [out, report] = solve(p);
  EXPECT_TRUE(report.converged) << report.termination;
  EXPECT_NEAR(out.intrinsics.f_mm, 50.0, 1e-6);
  EXPECT_LT(report.final_rms, 1e-6);
}

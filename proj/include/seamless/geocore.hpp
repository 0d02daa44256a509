#pragma once

// Camera model, rotation conventions and rigid transforms shared by every
// other module.
//
// Conventions:
//   * World frame is right-handed, Z up, metric.
//   * A pose stores the projection centre t and angles (omega, phi, kappa) in
//     radians. R = Rz(kappa) * Ry(phi) * Rx(omega) rotates camera-frame
//     vectors into the world frame.
//   * The camera looks along its -z axis (aerial photogrammetry), so the zero
//     rotation is a nadir view. Image x is along camera +x, image y along
//     camera +y; pixel v grows downwards, pixel centres sit at integers.
//   * Radial distortion acts on the normalized image point:
//       x_d = x_n * (1 + k0 + k1 r^2 + k2 r^4 + ...),  r^2 = |x_n|^2

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "seamless/error.hpp"

namespace seamless {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

constexpr double deg_to_rad(double deg) { return deg * (std::numbers::pi / 180.0); }
constexpr double rad_to_deg(double rad) { return rad * (180.0 / std::numbers::pi); }

struct CameraIntrinsics {
  double f_mm = 50.0;
  double pixel_pitch_mm = 0.0074;
  double x0_px = 0.0;
  double y0_px = 0.0;
  std::vector<double> k;  // k0, k1, k2, ...
  int width_px = 1;
  int height_px = 1;

  /// Focal length expressed in pixels.
  double focal_px() const { return f_mm / pixel_pitch_mm; }

  bool in_bounds(const Vec2& pixel) const {
    return pixel.x() >= -0.5 && pixel.y() >= -0.5 && pixel.x() < width_px - 0.5 &&
           pixel.y() < height_px - 0.5;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (!(f_mm > 0.0) || !std::isfinite(f_mm)) fail("focal length must be positive");
    if (!(pixel_pitch_mm > 0.0) || !std::isfinite(pixel_pitch_mm)) fail("pixel pitch must be positive");
    if (width_px < 1 || height_px < 1) fail("sensor size must be at least 1x1 px");
    if (!(x0_px >= 0.0 && x0_px < width_px)) fail("principal point x0 outside sensor");
    if (!(y0_px >= 0.0 && y0_px < height_px)) fail("principal point y0 outside sensor");
    for (double c : k) {
      if (!std::isfinite(c)) fail("distortion coefficient not finite");
    }
  }

  /// 16 MPix KAI-16070 sensor (4864 x 3232, 7.4 um) behind a 50 mm lens.
  static CameraIntrinsics aerial_default() {
    CameraIntrinsics c;
    c.f_mm = 50.0;
    c.pixel_pitch_mm = 0.0074;
    c.width_px = 4864;
    c.height_px = 3232;
    c.x0_px = 2431.5;
    c.y0_px = 1615.5;
    return c;
  }
};

inline Mat3 rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Mat3 rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Mat3 rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

/// R = Rz(kappa) * Ry(phi) * Rx(omega). Angles in radians.
inline Mat3 rotation_from_angles(const Vec3& omega_phi_kappa) {
  return rotation_z(omega_phi_kappa.z()) * rotation_y(omega_phi_kappa.y()) *
         rotation_x(omega_phi_kappa.x());
}

/// Inverse of rotation_from_angles; phi is returned in [-pi/2, pi/2].
inline Vec3 angles_from_rotation(const Mat3& r) {
  const double s = std::clamp(-r(2, 0), -1.0, 1.0);
  const double phi = std::asin(s);
  if (std::abs(s) > 1.0 - 1e-12) {
    // Gimbal lock: only kappa -/+ omega is observable; put everything in kappa.
    const double kappa = std::atan2(-r(0, 1), r(1, 1));
    return {0.0, phi, kappa};
  }
  return {std::atan2(r(2, 1), r(2, 2)), phi, std::atan2(r(1, 0), r(0, 0))};
}

/// Exterior orientation: projection centre and rotation angles.
struct Pose {
  Vec3 t = Vec3::Zero();
  Vec3 r = Vec3::Zero();  // omega, phi, kappa [rad]

  Mat3 rotation() const { return rotation_from_angles(r); }

  Vec3 world_to_camera(const Vec3& p) const { return rotation().transpose() * (p - t); }
  Vec3 camera_to_world(const Vec3& p) const { return rotation() * p + t; }

  static Pose from_rotation(const Vec3& centre, const Mat3& rot) {
    return Pose{centre, angles_from_rotation(rot)};
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double s) const { return origin + s * direction; }

  double distance_to(const Vec3& p) const {
    const Vec3 d = p - origin;
    return (d - d.dot(direction) * direction).norm();
  }
};

/// Similarity in general, rigid when scale == 1: p -> scale * R * p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static RigidTransform identity() { return {}; }

  Mat4 homogeneous() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = scale * rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.scale = 1.0 / scale;
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
  }
};

inline Vec3 apply_transform(const RigidTransform& t, const Vec3& p) {
  return t.scale * (t.rotation * p) + t.translation;
}

/// outer o inner: applying the result equals applying `inner` first.
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
  RigidTransform c;
  c.rotation = outer.rotation * inner.rotation;
  c.scale = outer.scale * inner.scale;
  c.translation = outer.scale * (outer.rotation * inner.translation) + outer.translation;
  return c;
}

/// Poses move with a transform: centre mapped, orientation left-composed.
inline Pose transform_pose(const RigidTransform& t, const Pose& pose) {
  return Pose::from_rotation(apply_transform(t, pose.t), t.rotation * pose.rotation());
}

namespace detail {

inline double distortion_factor(const std::vector<double>& k, double r2) {
  if (k.empty()) return 1.0;
  double factor = 1.0 + k[0];
  double rp = r2;
  for (std::size_t i = 1; i < k.size(); ++i) {
    factor += k[i] * rp;
    rp *= r2;
  }
  return factor;
}

}  // namespace detail

inline Vec2 distort_normalized(const CameraIntrinsics& cam, const Vec2& xn) {
  return xn * detail::distortion_factor(cam.k, xn.squaredNorm());
}

/// Fixed-point inversion of the distortion polynomial. Iterates until the
/// update stalls (or max_iterations), then requires the forward residual to
/// be below `tolerance` in normalized units.
inline Vec2 undistort_normalized(const CameraIntrinsics& cam, const Vec2& xd, int max_iterations = 20,
                                 double tolerance = 1e-10) {
  if (cam.k.empty()) return xd;
  Vec2 xu = xd;
  for (int i = 0; i < max_iterations; ++i) {
    const double factor = detail::distortion_factor(cam.k, xu.squaredNorm());
    if (!(std::abs(factor) > 1e-12)) break;
    const Vec2 next = xd / factor;
    const double step = (next - xu).norm();
    xu = next;
    if (step <= 1e-16 * (1.0 + xu.norm())) break;
  }
  const double residual = (distort_normalized(cam, xu) - xd).norm();
  if (std::isfinite(residual) && residual < tolerance) return xu;
  throw Error(ErrorCode::DistortionInversionDiverged, "distortion inversion did not converge");
}

inline Vec2 normalized_to_pixel(const CameraIntrinsics& cam, const Vec2& xd) {
  const double fp = cam.focal_px();
  return {cam.x0_px + fp * xd.x(), cam.y0_px - fp * xd.y()};
}

inline Vec2 pixel_to_normalized(const CameraIntrinsics& cam, const Vec2& px) {
  const double fp = cam.focal_px();
  return {(px.x() - cam.x0_px) / fp, -(px.y() - cam.y0_px) / fp};
}

constexpr double kMinDepth = 1e-9;

/// Projects a camera-frame point; nullopt when it is not in front of the camera.
inline std::optional<Vec2> project_camera_point(const CameraIntrinsics& cam, const Vec3& pc) {
  const double depth = -pc.z();
  if (!(depth > kMinDepth)) return std::nullopt;
  const Vec2 xn(pc.x() / depth, pc.y() / depth);
  return normalized_to_pixel(cam, distort_normalized(cam, xn));
}

/// World point to pixel. nullopt signals BehindCamera.
inline std::optional<Vec2> project(const CameraIntrinsics& cam, const Pose& pose, const Vec3& point) {
  return project_camera_point(cam, pose.world_to_camera(point));
}

/// Throwing variant of project for callers that treat BehindCamera as an error.
inline Vec2 project_or_throw(const CameraIntrinsics& cam, const Pose& pose, const Vec3& point) {
  auto px = project(cam, pose, point);
  if (!px) throw Error(ErrorCode::BehindCamera, "point is not in front of the camera");
  return *px;
}

/// World-frame ray through the projection centre and the given pixel.
inline Ray pixel_to_ray(const CameraIntrinsics& cam, const Pose& pose, const Vec2& pixel) {
  const Vec2 xn = undistort_normalized(cam, pixel_to_normalized(cam, pixel));
  const Vec3 dir_cam = Vec3(xn.x(), xn.y(), -1.0).normalized();
  return Ray{pose.t, (pose.rotation() * dir_cam).normalized()};
}

}  // namespace seamless

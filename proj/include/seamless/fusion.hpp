#pragma once

// Voxel accumulation, occupancy/colour filtering and occlusion-aware
// colourisation of fused point clouds.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <map>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"
#include "seamless/pointcloud.hpp"
#include "seamless/raster.hpp"

namespace seamless {

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Neumaier-compensated running sum; keeps centroids independent of the
/// accumulation order to well below 1e-12 relative.
struct CompensatedSum3 {
  Vec3 sum = Vec3::Zero();
  Vec3 carry = Vec3::Zero();

  void add(const Vec3& v) {
    for (int i = 0; i < 3; ++i) {
      const double t = sum(i) + v(i);
      if (std::abs(sum(i)) >= std::abs(v(i))) {
        carry(i) += (sum(i) - t) + v(i);
      } else {
        carry(i) += (v(i) - t) + sum(i);
      }
      sum(i) = t;
    }
  }
  Vec3 value() const { return sum + carry; }
};

struct ColorBin {
  std::uint64_t count = 0;
  std::array<std::uint64_t, 3> channel_sum{};
};

struct VoxelStats {
  std::uint64_t count = 0;
  std::uint64_t colored = 0;
  CompensatedSum3 position_sum;
  std::map<std::uint16_t, ColorBin> color_bins;  // 3 bits per channel

  Vec3 centroid() const { return position_sum.value() / static_cast<double>(count); }
  double colored_fraction() const { return count == 0 ? 0.0 : static_cast<double>(colored) / count; }

  /// Mean colour of the most populated bin; ties go to the lowest bin.
  std::optional<Rgb> majority_color() const {
    const ColorBin* best = nullptr;
    for (const auto& [bin, c] : color_bins) {
      if (best == nullptr || c.count > best->count) best = &c;
    }
    if (best == nullptr) return std::nullopt;
    Rgb out{};
    for (int i = 0; i < 3; ++i) {
      out[i] = static_cast<std::uint8_t>((best->channel_sum[i] + best->count / 2) / best->count);
    }
    return out;
  }
};

class VoxelGrid {
 public:
  explicit VoxelGrid(double voxel_size = 0.1, const Vec3& origin = Vec3::Zero())
      : voxel_size_(voxel_size), origin_(origin) {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
      throw Error(ErrorCode::InvalidArgument, "voxel size must be positive");
    }
  }

  double voxel_size() const { return voxel_size_; }
  const Vec3& origin() const { return origin_; }

  /// floor((p - origin) / size): boundary points belong to the higher voxel.
  VoxelKey key_of(const Vec3& p) const {
    const Vec3 q = (p - origin_) / voxel_size_;
    return {static_cast<std::int64_t>(std::floor(q.x())), static_cast<std::int64_t>(std::floor(q.y())),
            static_cast<std::int64_t>(std::floor(q.z()))};
  }

  Vec3 voxel_min_corner(const VoxelKey& k) const {
    return origin_ + voxel_size_ * Vec3(static_cast<double>(k.x), static_cast<double>(k.y), static_cast<double>(k.z));
  }

  void add_point(const CloudPoint& p) {
    if (!p.position.allFinite()) throw Error(ErrorCode::InvalidArgument, "point position is not finite");
    VoxelStats& v = voxels_[key_of(p.position)];
    ++v.count;
    v.position_sum.add(p.position);
    if (p.color) {
      ++v.colored;
      const Rgb& c = *p.color;
      const auto bin = static_cast<std::uint16_t>(((c[0] >> 5) << 6) | ((c[1] >> 5) << 3) | (c[2] >> 5));
      ColorBin& b = v.color_bins[bin];
      ++b.count;
      for (int i = 0; i < 3; ++i) b.channel_sum[i] += c[i];
    }
  }

  /// Records a frame id; false when that frame was accumulated before.
  bool mark_frame(std::int64_t frame_id) { return frames_.insert(frame_id).second; }

  std::uint64_t count_at(const VoxelKey& k) const {
    auto it = voxels_.find(k);
    return it == voxels_.end() ? 0 : it->second.count;
  }
  const VoxelStats* find(const VoxelKey& k) const {
    auto it = voxels_.find(k);
    return it == voxels_.end() ? nullptr : &it->second;
  }
  std::size_t voxel_count() const { return voxels_.size(); }

  /// Keys in ascending order, for deterministic output.
  std::vector<VoxelKey> sorted_keys() const {
    std::vector<VoxelKey> keys;
    keys.reserve(voxels_.size());
    for (const auto& [k, v] : voxels_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

 private:
  double voxel_size_;
  Vec3 origin_;
  std::unordered_map<VoxelKey, VoxelStats, VoxelKeyHash> voxels_;
  std::set<std::int64_t> frames_;
};

/// Bins every point. Re-adding a cloud counts it again; use accumulate_frame
/// to deduplicate by frame id.
inline void accumulate(VoxelGrid& grid, const PointCloud& cloud) {
  for (const auto& p : cloud.points) grid.add_point(p);
}

inline bool accumulate_frame(VoxelGrid& grid, const PointCloud& cloud, std::int64_t frame_id) {
  if (!grid.mark_frame(frame_id)) return false;
  accumulate(grid, cloud);
  return true;
}

/// One centroid per surviving voxel. Voxels with fewer than min_points points
/// are dropped; with min_rgb_fraction > 0, so are voxels whose coloured share
/// is below it. Survivors carry the majority-bin colour when they have one.
inline PointCloud filter_voxels(const VoxelGrid& grid, std::uint64_t min_points, double min_rgb_fraction) {
  if (!(min_rgb_fraction >= 0.0 && min_rgb_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "min_rgb_fraction must lie in [0, 1]");
  }
  PointCloud out;
  for (const VoxelKey& k : grid.sorted_keys()) {
    const VoxelStats& v = *grid.find(k);
    if (v.count == 0 || v.count < min_points) continue;
    if (min_rgb_fraction > 0.0 && v.colored_fraction() < min_rgb_fraction) continue;
    CloudPoint p;
    p.position = v.centroid();
    p.color = v.majority_color();
    out.points.push_back(p);
  }
  return out;
}

struct FusionSettings {
  double voxel_size = 0.1;
  Vec3 origin = Vec3::Zero();
  std::uint64_t min_points = 3;  // 0 passes the raw points through
  double min_rgb_fraction = 0.0;
};

/// Accumulates the clouds (deduplicated by frame id where set) and filters.
inline PointCloud fuse_clouds(std::span<const PointCloud> clouds, const FusionSettings& settings) {
  if (settings.min_points == 0) {
    PointCloud raw;
    for (const auto& c : clouds) raw.points.insert(raw.points.end(), c.points.begin(), c.points.end());
    return raw;
  }
  VoxelGrid grid(settings.voxel_size, settings.origin);
  for (const auto& c : clouds) {
    const bool has_frame = !c.points.empty() && c.points.front().frame_id.has_value();
    if (has_frame) {
      accumulate_frame(grid, c, *c.points.front().frame_id);
    } else {
      accumulate(grid, c);
    }
  }
  return filter_voxels(grid, settings.min_points, settings.min_rgb_fraction);
}

struct ColorizeOptions {
  std::uint64_t occlusion_threshold = 1;
};

/// Walks the voxels pierced by the segment from `from` to `to` (integer grid
/// stepping) and reports whether any occupied voxel other than the start and
/// end voxels lies on it.
inline bool segment_occluded(const VoxelGrid& grid, const Vec3& from, const Vec3& to, std::uint64_t threshold) {
  const VoxelKey start = grid.key_of(from);
  const VoxelKey end = grid.key_of(to);
  if (start == end) return false;

  const Vec3 dir = to - from;
  std::array<std::int64_t, 3> cur{start.x, start.y, start.z};
  const std::array<std::int64_t, 3> target{end.x, end.y, end.z};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{}, t_delta{};
  const double s = grid.voxel_size();
  for (int i = 0; i < 3; ++i) {
    if (dir(i) > 0.0) {
      step[i] = 1;
      const double boundary = grid.origin()(i) + s * static_cast<double>(cur[i] + 1);
      t_max[i] = (boundary - from(i)) / dir(i);
      t_delta[i] = s / dir(i);
    } else if (dir(i) < 0.0) {
      step[i] = -1;
      const double boundary = grid.origin()(i) + s * static_cast<double>(cur[i]);
      t_max[i] = (boundary - from(i)) / dir(i);
      t_delta[i] = -s / dir(i);
    } else {
      step[i] = 0;
      t_max[i] = std::numeric_limits<double>::infinity();
      t_delta[i] = std::numeric_limits<double>::infinity();
    }
  }

  while (true) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] > 1.0) return false;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (cur == target) return false;
    if (grid.count_at({cur[0], cur[1], cur[2]}) >= threshold) return true;
  }
}

/// Colours each point from the RGB image unless it is behind the camera,
/// outside the frame, or hidden behind an occupied voxel. Points that fail
/// any test come back uncoloured.
inline PointCloud colorize_with_occlusion(const PointCloud& cloud, const VoxelGrid& grid, const RgbImage& rgb,
                                          const CameraIntrinsics& intrinsics, const Pose& rgb_pose,
                                          const ColorizeOptions& opts = {}) {
  if (rgb.width != intrinsics.width_px || rgb.height != intrinsics.height_px) {
    throw Error(ErrorCode::DimensionMismatch, "RGB image size differs from the camera sensor");
  }
  PointCloud out = cloud;
  for (auto& p : out.points) {
    p.color.reset();
    const auto px = project(intrinsics, rgb_pose, p.position);
    if (!px) continue;
    const long u = std::lround(px->x());
    const long v = std::lround(px->y());
    if (u < 0 || v < 0 || u >= rgb.width || v >= rgb.height) continue;
    if (segment_occluded(grid, rgb_pose.t, p.position, opts.occlusion_threshold)) continue;
    p.color = rgb(static_cast<int>(u), static_cast<int>(v));
  }
  return out;
}

}  // namespace seamless

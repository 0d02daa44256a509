#pragma once

// Semi-Global Matching on rectified stereo pairs: census transform, Hamming
// matching costs, path-wise cost aggregation with P1/P2 smoothness penalties,
// winner-take-all disparity selection and triangulation to 3D points.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seamless/error.hpp"
#include "seamless/geocore.hpp"
#include "seamless/pointcloud.hpp"
#include "seamless/raster.hpp"

namespace seamless {

struct SgmParams {
  int d_min = 0;
  int d_max = 64;
  int p1 = 10;
  int p2 = 120;
  int n_paths = 8;
  int census_width = 5;
  int census_height = 5;
  double lr_max_diff = 1.0;
  double uniqueness_ratio = 1.05;
  bool lr_check = true;

  int disparities() const { return d_max - d_min + 1; }
  int census_bits() const { return census_width * census_height - 1; }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (!(d_min < d_max)) fail("d_min must be below d_max");
    if (!(p1 > 0 && p1 < p2)) fail("penalties must satisfy 0 < P1 < P2");
    if (n_paths != 4 && n_paths != 8) fail("n_paths must be 4 or 8");
    if (census_width < 1 || census_height < 1 || census_width % 2 == 0 || census_height % 2 == 0) {
      fail("census window must be odd in both dimensions");
    }
    if (census_bits() > 64) fail("census window exceeds 64 comparison bits");
    if (!(lr_max_diff >= 0.0)) fail("lr_max_diff must be non-negative");
    if (!(uniqueness_ratio >= 1.0)) fail("uniqueness_ratio must be at least 1");
    if (static_cast<long>(n_paths) * (census_bits() + p2) > std::numeric_limits<std::uint16_t>::max()) {
      fail("P2 too large: aggregated costs would overflow 16 bits");
    }
  }
};

struct CensusImage {
  Raster<std::uint64_t> bits;
  int n_bits = 0;
};

/// Bit i is set iff the i-th neighbour (row-major, centre skipped) is darker
/// than the centre. Neighbourhoods are edge-clamped at the border.
inline CensusImage census_transform(const GrayImage& image, int window_width, int window_height) {
  if (window_width % 2 == 0 || window_height % 2 == 0 || window_width < 1 || window_height < 1) {
    throw Error(ErrorCode::InvalidArgument, "census window must be odd in both dimensions");
  }
  if (window_width * window_height - 1 > 64) {
    throw Error(ErrorCode::InvalidArgument, "census window exceeds 64 comparison bits");
  }
  if (image.width < window_width || image.height < window_height) {
    throw Error(ErrorCode::ImageTooSmall, "image is smaller than the census window");
  }
  const int rx = window_width / 2, ry = window_height / 2;
  CensusImage out{Raster<std::uint64_t>(image.width, image.height, 0), window_width * window_height - 1};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto centre = image(x, y);
      std::uint64_t desc = 0;
      int bit = 0;
      for (int dy = -ry; dy <= ry; ++dy) {
        const int yy = std::clamp(y + dy, 0, image.height - 1);
        for (int dx = -rx; dx <= rx; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = std::clamp(x + dx, 0, image.width - 1);
          if (image(xx, yy) < centre) desc |= std::uint64_t{1} << bit;
          ++bit;
        }
      }
      out.bits(x, y) = desc;
    }
  }
  return out;
}

/// Which image the volume is indexed by. Left base matches (x, y) against
/// (x - d, y) in the right image; right base against (x + d, y) in the left.
enum class MatchBase { Left, Right };

/// Per-pixel, per-disparity costs; disparity is the fastest-varying index.
struct CostVolume {
  int width = 0;
  int height = 0;
  int d_min = 0;
  int d_max = 0;
  MatchBase base = MatchBase::Left;
  std::uint16_t max_raw_cost = 0;
  std::vector<std::uint16_t> cost;
  // 1 where every in-bounds matching cost of the pixel is equal, i.e. the data
  // prefers no disparity. Set from the raw volume and kept through aggregation.
  std::vector<std::uint8_t> tied;

  CostVolume() = default;
  CostVolume(int w, int h, int dmin, int dmax, MatchBase b, std::uint16_t max_cost)
      : width(w), height(h), d_min(dmin), d_max(dmax), base(b), max_raw_cost(max_cost),
        cost(static_cast<std::size_t>(w) * h * (dmax - dmin + 1), 0) {}

  int disparities() const { return d_max - d_min + 1; }

  std::size_t index(int x, int y, int d) const {
    return (static_cast<std::size_t>(y) * width + x) * disparities() + (d - d_min);
  }
  std::uint16_t& at(int x, int y, int d) { return cost[index(x, y, d)]; }
  std::uint16_t at(int x, int y, int d) const { return cost[index(x, y, d)]; }
  const std::uint16_t* cell(int x, int y) const { return &cost[index(x, y, d_min)]; }
  std::uint16_t* cell(int x, int y) { return &cost[index(x, y, d_min)]; }

  /// Whether disparity d at column x refers to a pixel inside the match image.
  bool in_bounds(int x, int d) const {
    const int xm = base == MatchBase::Left ? x - d : x + d;
    return xm >= 0 && xm < width;
  }

  friend bool operator==(const CostVolume&, const CostVolume&) = default;
};

inline CostVolume matching_cost_volume(const CensusImage& base, const CensusImage& match, int d_min, int d_max,
                                       MatchBase side = MatchBase::Left) {
  if (base.bits.width != match.bits.width || base.bits.height != match.bits.height ||
      base.n_bits != match.n_bits) {
    throw Error(ErrorCode::DimensionMismatch, "census rasters differ in size or window");
  }
  if (!(d_min < d_max)) throw Error(ErrorCode::InvalidArgument, "d_min must be below d_max");
  const int w = base.bits.width, h = base.bits.height;
  const auto max_cost = static_cast<std::uint16_t>(base.n_bits);
  CostVolume vol(w, h, d_min, d_max, side, max_cost);
  vol.tied.assign(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint64_t b = base.bits(x, y);
      std::uint16_t* c = vol.cell(x, y);
      int lo = std::numeric_limits<int>::max(), hi = -1;
      for (int d = d_min; d <= d_max; ++d) {
        const int xm = side == MatchBase::Left ? x - d : x + d;
        if (xm < 0 || xm >= w) {
          c[d - d_min] = max_cost;
          continue;
        }
        const int cost = std::popcount(b ^ match.bits(xm, y));
        c[d - d_min] = static_cast<std::uint16_t>(cost);
        lo = std::min(lo, cost);
        hi = std::max(hi, cost);
      }
      vol.tied[static_cast<std::size_t>(y) * w + x] = lo >= hi ? 1 : 0;
    }
  }
  return vol;
}

struct PathDirection {
  int dx = 0;
  int dy = 0;
};

/// Fixed order; the first four are the 4-path set.
inline constexpr std::array<PathDirection, 8> kPathDirections{{
    {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}}};

namespace detail {

// Adds L_r for one direction into `out`. L_r(p, d) = C(p, d) + min(L(p-r, d),
// L(p-r, d+-1) + P1, min_k L(p-r, k) + P2) - min_k L(p-r, k), with L = C where
// p - r falls outside the image. Two row buffers hold the recursion state.
inline void accumulate_path(const CostVolume& raw, int p1, int p2, PathDirection dir, CostVolume& out) {
  const int w = raw.width, h = raw.height, nd = raw.disparities();
  std::vector<std::uint16_t> prev_row(static_cast<std::size_t>(w) * nd), cur_row(prev_row.size());
  std::vector<std::uint16_t> prev_min(w), cur_min(w);

  const int y_begin = dir.dy >= 0 ? 0 : h - 1;
  const int y_step = dir.dy >= 0 ? 1 : -1;
  const int x_begin = dir.dx >= 0 ? 0 : w - 1;
  const int x_step = dir.dx >= 0 ? 1 : -1;

  for (int yi = 0, y = y_begin; yi < h; ++yi, y += y_step) {
    for (int xi = 0, x = x_begin; xi < w; ++xi, x += x_step) {
      const int px = x - dir.dx, py = y - dir.dy;
      const std::uint16_t* c = raw.cell(x, y);
      std::uint16_t* l = &cur_row[static_cast<std::size_t>(x) * nd];
      const std::uint16_t* lp = nullptr;
      int mp = 0;
      if (px >= 0 && px < w && py >= 0 && py < h) {
        if (dir.dy == 0) {
          lp = &cur_row[static_cast<std::size_t>(px) * nd];
          mp = cur_min[px];
        } else {
          lp = &prev_row[static_cast<std::size_t>(px) * nd];
          mp = prev_min[px];
        }
      }
      int lmin = std::numeric_limits<int>::max();
      if (lp == nullptr) {
        for (int k = 0; k < nd; ++k) {
          l[k] = c[k];
          lmin = std::min<int>(lmin, c[k]);
        }
      } else {
        const int jump = mp + p2;
        for (int k = 0; k < nd; ++k) {
          int best = lp[k];
          if (k > 0) best = std::min(best, lp[k - 1] + p1);
          if (k + 1 < nd) best = std::min(best, lp[k + 1] + p1);
          best = std::min(best, jump);
          const int v = c[k] + best - mp;
          l[k] = static_cast<std::uint16_t>(v);
          lmin = std::min(lmin, v);
        }
      }
      cur_min[x] = static_cast<std::uint16_t>(lmin);
      std::uint16_t* o = out.cell(x, y);
      for (int k = 0; k < nd; ++k) o[k] = static_cast<std::uint16_t>(o[k] + l[k]);
    }
    std::swap(prev_row, cur_row);
    std::swap(prev_min, cur_min);
  }
}

inline CostVolume empty_like(const CostVolume& v) {
  CostVolume out(v.width, v.height, v.d_min, v.d_max, v.base, v.max_raw_cost);
  out.tied = v.tied;
  return out;
}

}  // namespace detail

namespace detail {

// Aggregation alone tolerates P1 = P2 = 0; the matcher as a whole does not.
inline void check_aggregation(const CostVolume& raw, const SgmParams& params, int n_paths) {
  if (!(params.p1 >= 0 && params.p1 <= params.p2)) {
    throw Error(ErrorCode::InvalidArgument, "penalties must satisfy 0 <= P1 <= P2");
  }
  if (static_cast<long>(n_paths) * (raw.max_raw_cost + params.p2) > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "P2 too large: aggregated costs would overflow 16 bits");
  }
}

}  // namespace detail

/// Single-direction aggregation L_r, mainly for inspection and testing.
inline CostVolume aggregate_path(const CostVolume& raw, const SgmParams& params, PathDirection dir) {
  detail::check_aggregation(raw, params, 1);
  CostVolume out = detail::empty_like(raw);
  detail::accumulate_path(raw, params.p1, params.p2, dir, out);
  return out;
}

/// Sum of L_r over the first n_paths directions, combined in a fixed order.
/// raw.max_raw_cost must bound every raw cost.
inline CostVolume aggregate_costs(const CostVolume& raw, const SgmParams& params) {
  if (params.n_paths != 4 && params.n_paths != 8) {
    throw Error(ErrorCode::InvalidArgument, "n_paths must be 4 or 8");
  }
  detail::check_aggregation(raw, params, params.n_paths);
  CostVolume out = detail::empty_like(raw);
  for (int i = 0; i < params.n_paths; ++i) detail::accumulate_path(raw, params.p1, params.p2, kPathDirections[i], out);
  return out;
}

enum DisparityFlag : std::uint8_t {
  kLrFailed = 1,
  kUniquenessFailed = 2,
  kOutOfRange = 4,
};

struct DisparityMap {
  int width = 0;
  int height = 0;
  int d_min = 0;
  int d_max = 0;
  std::vector<float> value;          // NaN where invalid
  std::vector<std::uint8_t> flags;   // DisparityFlag bits

  DisparityMap() = default;
  DisparityMap(int w, int h, int dmin, int dmax)
      : width(w), height(h), d_min(dmin), d_max(dmax),
        value(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()),
        flags(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  float at(int x, int y) const { return value[index(x, y)]; }
  bool valid(int x, int y) const { return !std::isnan(value[index(x, y)]); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(value.begin(), value.end(), [](float v) { return !std::isnan(v); }));
  }
};

namespace detail {

struct WtaResult {
  int best_d = 0;
  double subpixel = 0.0;
  bool any_in_bounds = false;
  bool unique = false;
};

inline WtaResult winner_take_all(const CostVolume& vol, int x, int y, double uniqueness_ratio) {
  const std::uint16_t* c = vol.cell(x, y);
  const int nd = vol.disparities();
  WtaResult r;
  int best = std::numeric_limits<int>::max();
  int best_k = -1;
  for (int k = 0; k < nd; ++k) {
    if (!vol.in_bounds(x, vol.d_min + k)) continue;
    if (c[k] < best) {
      best = c[k];
      best_k = k;
    }
  }
  if (best_k < 0) return r;
  r.any_in_bounds = true;
  r.best_d = vol.d_min + best_k;
  r.subpixel = r.best_d;

  int second = std::numeric_limits<int>::max();
  for (int k = 0; k < nd; ++k) {
    if (std::abs(k - best_k) <= 1 || !vol.in_bounds(x, vol.d_min + k)) continue;
    second = std::min<int>(second, c[k]);
  }
  const bool tied = !vol.tied.empty() && vol.tied[static_cast<std::size_t>(y) * vol.width + x];
  r.unique = !tied && second != std::numeric_limits<int>::max() &&
             static_cast<double>(second) > static_cast<double>(best) * uniqueness_ratio;

  if (best_k > 0 && best_k + 1 < nd && vol.in_bounds(x, r.best_d - 1) && vol.in_bounds(x, r.best_d + 1)) {
    const double cm = c[best_k - 1], c0 = c[best_k], cp = c[best_k + 1];
    const double denom = cm - 2.0 * c0 + cp;
    if (denom > 0.0) r.subpixel = r.best_d + std::clamp((cm - cp) / (2.0 * denom), -0.5, 0.5);
  }
  return r;
}

}  // namespace detail

/// Winner-take-all with parabolic subpixel refinement, a uniqueness test and
/// (when a right-base volume is given) a left-right consistency check.
/// Only disparities that land inside the match image are candidates. Pixels
/// whose matching costs all tie fail the uniqueness test.
inline DisparityMap select_disparity(const CostVolume& aggregated, const SgmParams& params,
                                     const CostVolume* right_aggregated = nullptr) {
  if (right_aggregated != nullptr &&
      (right_aggregated->width != aggregated.width || right_aggregated->height != aggregated.height ||
       right_aggregated->d_min != aggregated.d_min || right_aggregated->d_max != aggregated.d_max)) {
    throw Error(ErrorCode::DimensionMismatch, "left and right volumes differ in shape");
  }
  const int w = aggregated.width, h = aggregated.height;
  DisparityMap out(w, h, aggregated.d_min, aggregated.d_max);

  std::vector<float> right_disp;
  if (right_aggregated != nullptr) {
    right_disp.assign(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::quiet_NaN());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto r = detail::winner_take_all(*right_aggregated, x, y, params.uniqueness_ratio);
        if (r.any_in_bounds) right_disp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(r.subpixel);
      }
    }
  }

  const double sign = aggregated.base == MatchBase::Left ? -1.0 : 1.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto r = detail::winner_take_all(aggregated, x, y, params.uniqueness_ratio);
      std::uint8_t flags = 0;
      if (!r.any_in_bounds) {
        flags |= kOutOfRange;
      } else {
        if (!r.unique) flags |= kUniquenessFailed;
        if (right_aggregated != nullptr) {
          const int xm = x + static_cast<int>(std::lround(sign * r.subpixel));
          const float dr = (xm >= 0 && xm < w) ? right_disp[static_cast<std::size_t>(y) * w + xm]
                                               : std::numeric_limits<float>::quiet_NaN();
          if (std::isnan(dr) || std::abs(r.subpixel - dr) > params.lr_max_diff) flags |= kLrFailed;
        }
      }
      const auto i = out.index(x, y);
      out.flags[i] = flags;
      if (flags == 0) out.value[i] = static_cast<float>(r.subpixel);
    }
  }
  return out;
}

/// Full matcher: census, both cost volumes, aggregation and selection.
inline DisparityMap compute_disparity(const GrayImage& left, const GrayImage& right, const SgmParams& params) {
  params.validate();
  if (left.width != right.width || left.height != right.height) {
    throw Error(ErrorCode::DimensionMismatch, "stereo images differ in size");
  }
  const CensusImage cl = census_transform(left, params.census_width, params.census_height);
  const CensusImage cr = census_transform(right, params.census_width, params.census_height);
  const CostVolume agg_left =
      aggregate_costs(matching_cost_volume(cl, cr, params.d_min, params.d_max, MatchBase::Left), params);
  if (!params.lr_check) return select_disparity(agg_left, params);
  const CostVolume agg_right =
      aggregate_costs(matching_cost_volume(cr, cl, params.d_min, params.d_max, MatchBase::Right), params);
  return select_disparity(agg_left, params, &agg_right);
}

constexpr double kMinDisparity = 1e-3;

/// Depth Z = f * B / (d * pitch) for every valid pixel, back-projected through
/// the (rectified, distortion-free) left camera and mapped to the world by
/// `pose`. Pixels with d <= 1e-3 px are skipped.
inline PointCloud disparity_to_cloud(const DisparityMap& disp, const CameraIntrinsics& intrinsics,
                                     double baseline_m, const Pose& pose, const RgbImage* color = nullptr,
                                     std::optional<std::int64_t> frame_id = std::nullopt) {
  if (!(baseline_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "baseline must be positive");
  if (color != nullptr && (color->width != disp.width || color->height != disp.height)) {
    throw Error(ErrorCode::DimensionMismatch, "color raster does not match the disparity map");
  }
  const double fb = intrinsics.focal_px() * baseline_m;
  const Mat3 rot = pose.rotation();
  PointCloud cloud;
  for (int y = 0; y < disp.height; ++y) {
    for (int x = 0; x < disp.width; ++x) {
      const float d = disp.at(x, y);
      if (std::isnan(d) || !(d > kMinDisparity)) continue;
      const double depth = fb / d;
      const Vec2 xn = pixel_to_normalized(intrinsics, Vec2(x, y));
      const Vec3 pc(xn.x() * depth, xn.y() * depth, -depth);
      CloudPoint p;
      p.position = rot * pc + pose.t;
      if (color != nullptr) p.color = (*color)(x, y);
      p.frame_id = frame_id;
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

}  // namespace seamless

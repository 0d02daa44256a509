#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "seamless/geocore.hpp"
#include "seamless/raster.hpp"

namespace seamless {

struct CloudPoint {
  Vec3 position = Vec3::Zero();
  std::optional<Rgb> color;
  std::optional<std::int64_t> frame_id;
};

struct PointCloud {
  std::vector<CloudPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  bool any_colored() const {
    for (const auto& p : points) {
      if (p.color) return true;
    }
    return false;
  }
  bool all_colored() const {
    for (const auto& p : points) {
      if (!p.color) return false;
    }
    return true;
  }
};

}  // namespace seamless

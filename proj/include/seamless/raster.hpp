#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "seamless/error.hpp"

namespace seamless {

/// Row-major single-channel image.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw Error(ErrorCode::InvalidArgument, "negative raster size");
  }

  T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

using GrayImage = Raster<std::uint16_t>;
using RgbImage = Raster<Rgb>;

}  // namespace seamless

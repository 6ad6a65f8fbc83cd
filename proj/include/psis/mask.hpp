// Copyright (c) 2026, The PSIS Toolkit Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psis {

/// Integer pixel rectangle, half-open: covers [x, x+w) x [y, y+h).
struct PixelBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool empty() const { return w <= 0 || h <= 0; }
  bool contains(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }
  bool operator==(const PixelBox&) const = default;
};

/// Row-major binary raster.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty_raster() const { return width_ == 0 || height_ == 0; }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool value = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  /// Bounds-checked read; anything outside the raster is background.
  bool get(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && at(x, y);
  }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::int64_t popcount() const;

  BinaryMask& operator|=(const BinaryMask& other);
  BinaryMask& subtract(const BinaryMask& other);
  bool operator==(const BinaryMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Minimal box containing every set pixel. Throws EmptyMaskError on an empty mask.
PixelBox tight_bbox(const BinaryMask& mask);

/// Copies the `box` window out of `mask`; pixels outside the source are unset.
BinaryMask crop(const BinaryMask& mask, const PixelBox& box);

/// Number of set pixels of `mask` that fall inside `box`.
std::int64_t popcount_in(const BinaryMask& mask, const PixelBox& box);

/// Chebyshev dilation by `radius` pixels.
BinaryMask dilate(const BinaryMask& mask, int radius);

/// Pixels that differ from at least one 4-neighbour (both sides of the edge).
BinaryMask boundary(const BinaryMask& mask);

/// COCO run-length encoding. Runs are column-major and start with a background run.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const Rle&) const = default;
};

Rle encode_rle(const BinaryMask& mask);
BinaryMask decode_rle(const Rle& rle);

/// Compressed-text codec used by the COCO API for `counts` strings.
Rle rle_from_string(std::string_view text, int height, int width);
std::string rle_to_string(const Rle& rle);

/// Scan-converts polygons given as flat x,y sequences. A pixel is covered when
/// its center lies inside a polygon under the even-odd rule; separate polygons
/// are unioned. Throws DegenerateGeometryError for polygons with < 3 vertices.
BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int width,
                              int height);

}  // namespace psis

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

#include "psis/mask.hpp"

#include <algorithm>
#include <numeric>

#include "psis/error.hpp"

namespace psis {

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DegenerateGeometryError("negative mask dimensions");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::int64_t BinaryMask::popcount() const {
  return std::accumulate(bits_.begin(), bits_.end(), std::int64_t{0});
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  if (other.width_ != width_ || other.height_ != height_)
    throw DegenerateGeometryError("mask union with mismatched dimensions");
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

BinaryMask& BinaryMask::subtract(const BinaryMask& other) {
  if (other.width_ != width_ || other.height_ != height_)
    throw DegenerateGeometryError("mask difference with mismatched dimensions");
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= static_cast<std::uint8_t>(!other.bits_[i]);
  return *this;
}

PixelBox tight_bbox(const BinaryMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw EmptyMaskError("tight_bbox of an empty mask");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

BinaryMask crop(const BinaryMask& mask, const PixelBox& box) {
  BinaryMask out(box.w, box.h);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x)
      if (mask.get(box.x + x, box.y + y)) out.set(x, y);
  return out;
}

std::int64_t popcount_in(const BinaryMask& mask, const PixelBox& box) {
  const int x0 = std::max(box.x, 0), x1 = std::min(box.right(), mask.width());
  const int y0 = std::max(box.y, 0), y1 = std::min(box.bottom(), mask.height());
  std::int64_t n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) n += mask.at(x, y);
  return n;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width(), h = mask.height();
  // Square structuring element is separable: horizontal pass, then vertical.
  BinaryMask rows(w, h);
  for (int y = 0; y < h; ++y) {
    int last = -radius - 1;
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y)) last = x;
      if (x - last <= radius) rows.set(x, y);
    }
    int next = w + radius + 1;
    for (int x = w - 1; x >= 0; --x) {
      if (mask.at(x, y)) next = x;
      if (next - x <= radius) rows.set(x, y);
    }
  }
  BinaryMask out(w, h);
  for (int x = 0; x < w; ++x) {
    int last = -radius - 1;
    for (int y = 0; y < h; ++y) {
      if (rows.at(x, y)) last = y;
      if (y - last <= radius) out.set(x, y);
    }
    int next = h + radius + 1;
    for (int y = h - 1; y >= 0; --y) {
      if (rows.at(x, y)) next = y;
      if (next - y <= radius) out.set(x, y);
    }
  }
  return out;
}

BinaryMask boundary(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool v = mask.at(x, y);
      const bool edge = (x > 0 && mask.at(x - 1, y) != v) || (x + 1 < w && mask.at(x + 1, y) != v) ||
                        (y > 0 && mask.at(x, y - 1) != v) || (y + 1 < h && mask.at(x, y + 1) != v);
      if (edge) out.set(x, y);
    }
  }
  return out;
}

Rle encode_rle(const BinaryMask& mask) {
  Rle rle{mask.height(), mask.width(), {}};
  bool current = false;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const bool v = mask.at(x, y);
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask decode_rle(const Rle& rle) {
  BinaryMask mask(rle.width, rle.height);
  const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * rle.height;
  std::uint64_t pos = 0;
  bool value = false;
  for (std::uint32_t run : rle.counts) {
    if (pos + run > total) throw IntegrityError("RLE counts exceed mask size");
    if (value) {
      for (std::uint64_t i = pos; i < pos + run; ++i) {
        const int x = static_cast<int>(i / rle.height);
        const int y = static_cast<int>(i % rle.height);
        mask.set(x, y);
      }
    }
    pos += run;
    value = !value;
  }
  if (pos != total) throw IntegrityError("RLE counts do not cover the mask");
  return mask;
}

Rle rle_from_string(std::string_view text, int height, int width) {
  Rle rle{height, width, {}};
  std::vector<std::int64_t> cnts;
  std::size_t p = 0;
  while (p < text.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= text.size()) throw ParseError("truncated compressed RLE", p);
      const std::int64_t c = static_cast<std::int64_t>(text[p]) - 48;
      if (c < 0 || c > 63) throw ParseError("invalid character in compressed RLE", p);
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= static_cast<std::int64_t>(-1) * (std::int64_t{1} << (5 * k));
    }
    if (cnts.size() > 2) x += cnts[cnts.size() - 2];
    if (x < 0) throw ParseError("negative run in compressed RLE", p);
    cnts.push_back(x);
  }
  rle.counts.assign(cnts.begin(), cnts.end());
  return rle;
}

std::string rle_to_string(const Rle& rle) {
  std::string out;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    std::int64_t x = rle.counts[i];
    if (i > 2) x -= rle.counts[i - 2];
    bool more = true;
    while (more) {
      std::int64_t c = x & 0x1f;
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      out.push_back(static_cast<char>(c + 48));
    }
  }
  return out;
}

BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int width,
                              int height) {
  BinaryMask mask(width, height);
  std::vector<double> crossings;
  for (const auto& poly : polygons) {
    if (poly.size() % 2 != 0) throw DegenerateGeometryError("polygon has an odd coordinate count");
    const std::size_t n = poly.size() / 2;
    if (n < 3) throw DegenerateGeometryError("polygon with fewer than 3 vertices");
    double ymin = poly[1], ymax = poly[1];
    for (std::size_t i = 0; i < n; ++i) {
      ymin = std::min(ymin, poly[2 * i + 1]);
      ymax = std::max(ymax, poly[2 * i + 1]);
    }
    const int row0 = std::max(0, static_cast<int>(ymin) - 1);
    const int row1 = std::min(height, static_cast<int>(ymax) + 2);
    for (int py = row0; py < row1; ++py) {
      const double yc = py + 0.5;
      crossings.clear();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = poly[2 * i], yi = poly[2 * i + 1];
        const double xj = poly[2 * j], yj = poly[2 * j + 1];
        if ((yi > yc) != (yj > yc)) crossings.push_back((xj - xi) * (yc - yi) / (yj - yi) + xi);
      }
      if (crossings.empty()) continue;
      std::sort(crossings.begin(), crossings.end());
      // Center xc is inside iff an odd number of crossings lie strictly right of it.
      std::size_t passed = 0;
      for (int px = 0; px < width; ++px) {
        const double xc = px + 0.5;
        while (passed < crossings.size() && crossings[passed] <= xc) ++passed;
        if ((crossings.size() - passed) % 2 == 1) mask.set(px, py);
      }
    }
  }
  return mask;
}

}  // namespace psis

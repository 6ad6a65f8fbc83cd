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
#include <filesystem>
#include <map>
#include <vector>

#include "psis/coco.hpp"
#include "psis/raster.hpp"

namespace psis::testing {

enum class ShapeKind { kEllipse, kRectangle, kDiamond, kStrip };

struct ShapeSpec {
  CategoryId category = 1;
  ShapeKind kind = ShapeKind::kEllipse;
  double cx = 0, cy = 0, rx = 0, ry = 0;
  bool crowd = false;
};

struct ImageSpec {
  int width = 96;
  int height = 64;
  std::vector<ShapeSpec> shapes;
};

/// A dataset with matching in-memory pixels. Later shapes paint over earlier ones.
struct Fixture {
  DetectionDataset ds;
  MemoryImageSource source;
  std::map<ImageId, Raster> rasters;

  /// Writes `annotations.json` and `images/<file_name>` under `dir`.
  void write(const std::filesystem::path& dir) const;
};

Polygons shape_polygon(const ShapeSpec& s);
std::vector<Category> make_categories(int n);

Fixture build_fixture(const std::vector<ImageSpec>& images, const std::vector<Category>& categories,
                      std::uint64_t seed);

struct RandomFixtureSpec {
  int images = 20;
  int classes = 3;
  int min_instances = 1;
  int max_instances = 4;
  int width = 96;
  int height = 64;
  /// Probability that an instance is placed to overlap the previous one.
  double overlap_rate = 0.0;
  std::uint64_t seed = 1;
};

/// Random non-border shapes; the shape kind follows the class so that
/// same-class instances tend to pass the shape constraint.
Fixture random_fixture(const RandomFixtureSpec& spec);

/// Single-class images with `per_image[c - 1]` instances of class c: one large
/// interior host plus border strips, which are never switch candidates.
/// `images_per_class` images are made for every class.
Fixture skewed_fixture(const std::vector<int>& per_image, int images_per_class, std::uint64_t seed);

}  // namespace psis::testing

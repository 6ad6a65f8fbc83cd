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


#include "fixtures.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "psis/mask.hpp"
#include "psis/util.hpp"

namespace psis::testing {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(splitmix64(state_++) >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  int integer(int lo, int hi) { return lo + static_cast<int>(splitmix64(state_++) % static_cast<std::uint64_t>(hi - lo + 1)); }

 private:
  std::uint64_t state_;
};

Raster::Pixel class_color(CategoryId c) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(c) * 7919);
  return {static_cast<std::uint8_t>(60 + h % 180), static_cast<std::uint8_t>(60 + (h >> 8) % 180),
          static_cast<std::uint8_t>(60 + (h >> 16) % 180)};
}

}  // namespace

Polygons shape_polygon(const ShapeSpec& s) {
  std::vector<double> pts;
  switch (s.kind) {
    case ShapeKind::kEllipse: {
      constexpr int kSides = 24;
      for (int i = 0; i < kSides; ++i) {
        const double a = 2 * std::numbers::pi * i / kSides;
        pts.push_back(s.cx + s.rx * std::cos(a));
        pts.push_back(s.cy + s.ry * std::sin(a));
      }
      break;
    }
    case ShapeKind::kRectangle:
    case ShapeKind::kStrip:
      pts = {s.cx - s.rx, s.cy - s.ry, s.cx + s.rx, s.cy - s.ry, s.cx + s.rx, s.cy + s.ry, s.cx - s.rx, s.cy + s.ry};
      break;
    case ShapeKind::kDiamond:
      pts = {s.cx, s.cy - s.ry, s.cx + s.rx, s.cy, s.cx, s.cy + s.ry, s.cx - s.rx, s.cy};
      break;
  }
  return {pts};
}

std::vector<Category> make_categories(int n) {
  std::vector<Category> cats;
  for (int c = 1; c <= n; ++c) cats.push_back({c, "class" + std::to_string(c), "shape"});
  return cats;
}

Fixture build_fixture(const std::vector<ImageSpec>& images, const std::vector<Category>& categories,
                      std::uint64_t seed) {
  std::vector<ImageRecord> recs;
  std::vector<Annotation> anns;
  Fixture f;
  AnnotationId next_ann = 1;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageSpec& spec = images[i];
    const ImageId id = static_cast<ImageId>(i + 1);
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i + 1);
    recs.push_back({id, name, spec.width, spec.height});

    Raster r(spec.width, spec.height);
    const std::uint64_t img_seed = sub_seed(seed, static_cast<std::uint64_t>(id));
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const std::uint64_t h = splitmix64(img_seed ^ (static_cast<std::uint64_t>(y) << 20) ^ static_cast<std::uint64_t>(x));
        r.set(x, y, {static_cast<std::uint8_t>(20 + x * 2 % 100 + h % 16), static_cast<std::uint8_t>(30 + y * 3 % 90 + (h >> 8) % 16),
                     static_cast<std::uint8_t>(40 + (h >> 16) % 32)});
      }
    }
    for (const ShapeSpec& s : spec.shapes) {
      Annotation a;
      a.id = next_ann++;
      a.image_id = id;
      a.category_id = s.category;
      a.iscrowd = s.crowd;
      const Polygons poly = shape_polygon(s);
      const BinaryMask m = rasterize_polygons(poly, spec.width, spec.height);
      const PixelBox box = tight_bbox(m);
      a.bbox = {static_cast<double>(box.x), static_cast<double>(box.y), static_cast<double>(box.w),
                static_cast<double>(box.h)};
      a.area = static_cast<double>(m.popcount());
      if (s.crowd) {
        a.segmentation = encode_rle(m);
      } else {
        a.segmentation = poly;
      }
      const Raster::Pixel col = class_color(s.category);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (!m.at(x, y)) continue;
          const int shade = static_cast<int>((x + y) % 5) * 6;
          r.set(x, y, {static_cast<std::uint8_t>(col[0] - shade / 2), static_cast<std::uint8_t>(col[1] + shade / 3),
                       static_cast<std::uint8_t>(col[2] - shade / 4)});
        }
      }
      anns.push_back(std::move(a));
    }
    f.source.add(id, r);
    f.rasters.emplace(id, std::move(r));
  }
  f.ds = DetectionDataset(std::move(recs), std::move(anns), categories);
  return f;
}

void Fixture::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "images");
  for (const auto& im : ds.images()) {
    save_image(rasters.at(im.id), dir / "images" / im.file_name);
  }
  serialize_dataset(ds, dir / "annotations.json");
}

Fixture random_fixture(const RandomFixtureSpec& spec) {
  Rng rng(spec.seed);
  std::vector<ImageSpec> images;
  for (int i = 0; i < spec.images; ++i) {
    ImageSpec im;
    im.width = spec.width;
    im.height = spec.height;
    const int n = rng.integer(spec.min_instances, spec.max_instances);
    for (int k = 0; k < n; ++k) {
      ShapeSpec s;
      s.category = rng.integer(1, spec.classes);
      s.kind = static_cast<ShapeKind>((s.category - 1) % 3);
      const double aspect = (0.6 + 0.2 * static_cast<double>((s.category - 1) % 4)) * rng.uniform(0.9, 1.1);
      if (k > 0 && rng.uniform(0, 1) < spec.overlap_rate) {
        // Small shape inside the previous one.
        const ShapeSpec& prev = im.shapes.back();
        s.rx = prev.rx * 0.45;
        s.ry = std::min(prev.ry * 0.45, s.rx * aspect);
        s.cx = prev.cx + rng.uniform(-0.2, 0.2) * prev.rx;
        s.cy = prev.cy + rng.uniform(-0.2, 0.2) * prev.ry;
      } else {
        s.rx = rng.uniform(6.0, std::min(16.0, spec.width / 4.0));
        s.ry = std::max(3.0, s.rx * aspect);
        s.cx = rng.uniform(s.rx + 2, spec.width - s.rx - 2);
        s.cy = rng.uniform(s.ry + 2, spec.height - s.ry - 2);
      }
      im.shapes.push_back(s);
    }
    images.push_back(std::move(im));
  }
  return build_fixture(images, make_categories(spec.classes), spec.seed);
}

Fixture skewed_fixture(const std::vector<int>& per_image, int images_per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageSpec> images;
  constexpr int kW = 96, kH = 64;
  for (int i = 0; i < images_per_class; ++i) {
    for (std::size_t ci = 0; ci < per_image.size(); ++ci) {
      const CategoryId c = static_cast<CategoryId>(ci + 1);
      ImageSpec im;
      im.width = kW;
      im.height = kH;
      ShapeSpec host;
      host.category = c;
      host.kind = static_cast<ShapeKind>(ci % 3);
      host.rx = rng.uniform(12.0, 18.0);
      host.ry = host.rx * 0.7;
      host.cx = rng.uniform(30.0, 66.0);
      host.cy = rng.uniform(28.0, 36.0);
      im.shapes.push_back(host);
      // 12x2 strips along the top and bottom rows: more than 0.4 of their
      // bbox perimeter lies on the border.
      for (int k = 0; k + 1 < per_image[ci]; ++k) {
        ShapeSpec strip;
        strip.category = c;
        strip.kind = ShapeKind::kStrip;
        strip.rx = 6;
        strip.ry = 1;
        strip.cx = 2 + 6 + 15 * (k % 6);
        strip.cy = k < 6 ? 1 : kH - 1;
        im.shapes.push_back(strip);
      }
      images.push_back(std::move(im));
    }
  }
  return build_fixture(images, make_categories(static_cast<int>(per_image.size())), seed);
}

}  // namespace psis::testing

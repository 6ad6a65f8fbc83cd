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
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "psis/mask.hpp"

namespace psis {

using ImageId = std::int64_t;
using AnnotationId = std::int64_t;
using CategoryId = std::int64_t;

struct ImageRecord {
  ImageId id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;

  bool operator==(const ImageRecord&) const = default;
};

/// Flat x,y sequences in pixel coordinates, one vector per polygon.
using Polygons = std::vector<std::vector<double>>;
using Segmentation = std::variant<Polygons, Rle>;

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const BBox&) const = default;
};

struct Annotation {
  AnnotationId id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  Segmentation segmentation;
  BBox bbox;
  double area = 0;
  bool iscrowd = false;

  bool operator==(const Annotation&) const = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;
  std::string supercategory;

  bool operator==(const Category&) const = default;
};

/// COCO-style dataset. Construction validates referential integrity and builds
/// lookup indices; the object is immutable afterwards.
class DetectionDataset {
 public:
  DetectionDataset() = default;
  DetectionDataset(std::vector<ImageRecord> images, std::vector<Annotation> annotations,
                   std::vector<Category> categories, std::filesystem::path image_root = {});

  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const std::vector<Category>& categories() const { return categories_; }
  const std::filesystem::path& image_root() const { return image_root_; }

  /// Top-level keys other than images/annotations/categories, kept verbatim.
  const nlohmann::ordered_json& extra() const { return extra_; }
  void set_extra(nlohmann::ordered_json extra) { extra_ = std::move(extra); }

  const ImageRecord& image(ImageId id) const;
  const Annotation& annotation(AnnotationId id) const;
  const Category& category(CategoryId id) const;
  bool has_category(CategoryId id) const { return category_index_.count(id) != 0; }

  /// Indices into annotations() of every annotation on `image`, in file order.
  std::span<const std::size_t> annotations_of(ImageId image) const;

  std::vector<CategoryId> category_ids() const;
  AnnotationId max_annotation_id() const;
  ImageId max_image_id() const;

  /// Structural equality (image_root and index state excluded).
  bool operator==(const DetectionDataset& other) const;

 private:
  std::vector<ImageRecord> images_;
  std::vector<Annotation> annotations_;
  std::vector<Category> categories_;
  std::filesystem::path image_root_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();

  std::unordered_map<ImageId, std::size_t> image_index_;
  std::unordered_map<AnnotationId, std::size_t> annotation_index_;
  std::unordered_map<CategoryId, std::size_t> category_index_;
  std::unordered_map<ImageId, std::vector<std::size_t>> per_image_;
};

DetectionDataset parse_dataset_text(std::string_view text, const std::filesystem::path& image_root = {});
DetectionDataset parse_dataset(const std::filesystem::path& annotation_file,
                               const std::filesystem::path& image_root);

/// Deterministic rendering: fixed key order, RLE counts as integer lists.
std::string serialize_dataset_text(const DetectionDataset& ds);
void serialize_dataset(const DetectionDataset& ds, const std::filesystem::path& out);

nlohmann::ordered_json annotation_to_json(const Annotation& ann);
Annotation annotation_from_json(const nlohmann::json& j);

/// Full-image mask of an annotation. Crowd RLE is decoded directly.
BinaryMask rasterize_mask(const Annotation& ann, const ImageRecord& image);

/// Builds an annotation whose segmentation, bbox and area all derive from `mask`.
Annotation annotation_from_mask(AnnotationId id, ImageId image_id, CategoryId category_id,
                                const BinaryMask& mask);

/// Checks a rewritten annotation: re-rasterized bbox within `bbox_tol` pixels per
/// edge and popcount within `area_rel_tol` of the stored area.
bool annotation_is_sound(const Annotation& ann, const ImageRecord& image, double bbox_tol = 1.0,
                         double area_rel_tol = 0.02);

/// Throws IntegrityError on dangling references, duplicate ids or bad image sizes.
void check_integrity(const std::vector<ImageRecord>& images, const std::vector<Annotation>& annotations,
                     const std::vector<Category>& categories);

}  // namespace psis

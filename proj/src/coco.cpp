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

#include "psis/coco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "psis/error.hpp"

namespace psis {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::vector<std::size_t> kNoAnnotations;

template <typename T>
T required(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) throw IntegrityError(std::string(what) + " is missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw IntegrityError(std::string(what) + " field '" + key + "' has the wrong type: " + e.what());
  }
}

Segmentation segmentation_from_json(const json& j) {
  if (j.is_array()) {
    Polygons polys;
    for (const auto& p : j) polys.push_back(p.get<std::vector<double>>());
    return polys;
  }
  if (j.is_object()) {
    const auto size = required<std::vector<int>>(j, "size", "RLE segmentation");
    if (size.size() != 2) throw IntegrityError("RLE size must be [height, width]");
    const auto& counts = j.at("counts");
    if (counts.is_string())
      return rle_from_string(counts.get<std::string>(), size[0], size[1]);
    Rle rle{size[0], size[1], counts.get<std::vector<std::uint32_t>>()};
    return rle;
  }
  throw IntegrityError("segmentation must be a polygon list or an RLE object");
}

ordered_json segmentation_to_json(const Segmentation& seg) {
  if (const auto* polys = std::get_if<Polygons>(&seg)) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : *polys) arr.push_back(p);
    return arr;
  }
  const auto& rle = std::get<Rle>(seg);
  ordered_json o;
  o["size"] = {rle.height, rle.width};
  o["counts"] = rle.counts;
  return o;
}

}  // namespace

DetectionDataset::DetectionDataset(std::vector<ImageRecord> images, std::vector<Annotation> annotations,
                                   std::vector<Category> categories, std::filesystem::path image_root)
    : images_(std::move(images)),
      annotations_(std::move(annotations)),
      categories_(std::move(categories)),
      image_root_(std::move(image_root)) {
  check_integrity(images_, annotations_, categories_);
  for (std::size_t i = 0; i < images_.size(); ++i) image_index_[images_[i].id] = i;
  for (std::size_t i = 0; i < categories_.size(); ++i) category_index_[categories_[i].id] = i;
  for (std::size_t i = 0; i < annotations_.size(); ++i) {
    annotation_index_[annotations_[i].id] = i;
    per_image_[annotations_[i].image_id].push_back(i);
  }
}

const ImageRecord& DetectionDataset::image(ImageId id) const {
  auto it = image_index_.find(id);
  if (it == image_index_.end()) throw IntegrityError("unknown image id " + std::to_string(id));
  return images_[it->second];
}

const Annotation& DetectionDataset::annotation(AnnotationId id) const {
  auto it = annotation_index_.find(id);
  if (it == annotation_index_.end()) throw IntegrityError("unknown annotation id " + std::to_string(id));
  return annotations_[it->second];
}

const Category& DetectionDataset::category(CategoryId id) const {
  auto it = category_index_.find(id);
  if (it == category_index_.end()) throw UnknownClassError("unknown category id " + std::to_string(id));
  return categories_[it->second];
}

std::span<const std::size_t> DetectionDataset::annotations_of(ImageId image) const {
  auto it = per_image_.find(image);
  if (it == per_image_.end()) return kNoAnnotations;
  return it->second;
}

std::vector<CategoryId> DetectionDataset::category_ids() const {
  std::vector<CategoryId> ids;
  for (const auto& c : categories_) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

AnnotationId DetectionDataset::max_annotation_id() const {
  AnnotationId m = 0;
  for (const auto& a : annotations_) m = std::max(m, a.id);
  return m;
}

ImageId DetectionDataset::max_image_id() const {
  ImageId m = 0;
  for (const auto& i : images_) m = std::max(m, i.id);
  return m;
}

bool DetectionDataset::operator==(const DetectionDataset& other) const {
  return images_ == other.images_ && annotations_ == other.annotations_ &&
         categories_ == other.categories_ && extra_ == other.extra_;
}

void check_integrity(const std::vector<ImageRecord>& images, const std::vector<Annotation>& annotations,
                     const std::vector<Category>& categories) {
  std::set<ImageId> image_ids;
  for (const auto& im : images) {
    if (!image_ids.insert(im.id).second) throw IntegrityError("duplicate image id " + std::to_string(im.id));
    if (im.width < 1 || im.height < 1)
      throw IntegrityError("image " + std::to_string(im.id) + " has non-positive dimensions");
  }
  std::set<CategoryId> cat_ids;
  for (const auto& c : categories)
    if (!cat_ids.insert(c.id).second) throw IntegrityError("duplicate category id " + std::to_string(c.id));
  std::set<AnnotationId> ann_ids;
  for (const auto& a : annotations) {
    if (!ann_ids.insert(a.id).second)
      throw IntegrityError("duplicate annotation id " + std::to_string(a.id));
    if (!image_ids.count(a.image_id))
      throw IntegrityError("annotation " + std::to_string(a.id) + " references missing image_id " +
                           std::to_string(a.image_id));
    if (!cat_ids.count(a.category_id))
      throw IntegrityError("annotation " + std::to_string(a.id) + " references missing category_id " +
                           std::to_string(a.category_id));
  }
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.id = required<AnnotationId>(j, "id", "annotation");
  a.image_id = required<ImageId>(j, "image_id", "annotation");
  a.category_id = required<CategoryId>(j, "category_id", "annotation");
  if (auto it = j.find("segmentation"); it != j.end()) a.segmentation = segmentation_from_json(*it);
  const auto bbox = required<std::vector<double>>(j, "bbox", "annotation");
  if (bbox.size() != 4) throw IntegrityError("annotation " + std::to_string(a.id) + " bbox must have 4 values");
  a.bbox = {bbox[0], bbox[1], bbox[2], bbox[3]};
  a.area = j.value("area", 0.0);
  a.iscrowd = j.value("iscrowd", 0) != 0;
  return a;
}

ordered_json annotation_to_json(const Annotation& a) {
  ordered_json o;
  o["id"] = a.id;
  o["image_id"] = a.image_id;
  o["category_id"] = a.category_id;
  o["segmentation"] = segmentation_to_json(a.segmentation);
  o["bbox"] = {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h};
  o["area"] = a.area;
  o["iscrowd"] = a.iscrowd ? 1 : 0;
  return o;
}

DetectionDataset parse_dataset_text(std::string_view text, const std::filesystem::path& image_root) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed annotation file: ") + e.what(), e.byte);
  }
  if (!root.is_object()) throw ParseError("annotation file must hold a JSON object", 0);

  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;
  try {
    for (const auto& j : root.value("images", json::array())) {
      ImageRecord im;
      im.id = required<ImageId>(j, "id", "image");
      im.file_name = required<std::string>(j, "file_name", "image");
      im.width = required<int>(j, "width", "image");
      im.height = required<int>(j, "height", "image");
      images.push_back(std::move(im));
    }
    for (const auto& j : root.value("annotations", json::array())) annotations.push_back(annotation_from_json(j));
    for (const auto& j : root.value("categories", json::array())) {
      Category c;
      c.id = required<CategoryId>(j, "id", "category");
      c.name = j.value("name", std::string{});
      c.supercategory = j.value("supercategory", std::string{});
      categories.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("unexpected annotation structure: ") + e.what());
  }

  DetectionDataset ds(std::move(images), std::move(annotations), std::move(categories), image_root);
  ordered_json extra = ordered_json::object();
  // json (unordered) sorts keys, so extra order is deterministic.
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (it.key() == "images" || it.key() == "annotations" || it.key() == "categories") continue;
    extra[it.key()] = ordered_json::parse(it.value().dump());
  }
  ds.set_extra(std::move(extra));
  return ds;
}

DetectionDataset parse_dataset(const std::filesystem::path& annotation_file,
                               const std::filesystem::path& image_root) {
  std::ifstream in(annotation_file, std::ios::binary);
  if (!in) throw IoError("cannot open annotation file " + annotation_file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_text(buf.str(), image_root);
}

std::string serialize_dataset_text(const DetectionDataset& ds) {
  ordered_json root = ordered_json::object();
  for (auto it = ds.extra().begin(); it != ds.extra().end(); ++it) root[it.key()] = it.value();
  ordered_json images = ordered_json::array();
  for (const auto& im : ds.images()) {
    ordered_json o;
    o["id"] = im.id;
    o["file_name"] = im.file_name;
    o["width"] = im.width;
    o["height"] = im.height;
    images.push_back(std::move(o));
  }
  ordered_json anns = ordered_json::array();
  for (const auto& a : ds.annotations()) anns.push_back(annotation_to_json(a));
  ordered_json cats = ordered_json::array();
  for (const auto& c : ds.categories()) {
    ordered_json o;
    o["id"] = c.id;
    o["name"] = c.name;
    if (!c.supercategory.empty()) o["supercategory"] = c.supercategory;
    cats.push_back(std::move(o));
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(anns);
  root["categories"] = std::move(cats);
  return root.dump(1) + "\n";
}

void serialize_dataset(const DetectionDataset& ds, const std::filesystem::path& out) {
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write annotation file " + out.string());
  f << serialize_dataset_text(ds);
  if (!f) throw IoError("failed writing annotation file " + out.string());
}

BinaryMask rasterize_mask(const Annotation& ann, const ImageRecord& image) {
  BinaryMask mask;
  if (const auto* polys = std::get_if<Polygons>(&ann.segmentation)) {
    if (polys->empty())
      throw DegenerateGeometryError("annotation " + std::to_string(ann.id) + " has an empty segmentation");
    mask = rasterize_polygons(*polys, image.width, image.height);
  } else {
    const auto& rle = std::get<Rle>(ann.segmentation);
    if (rle.height != image.height || rle.width != image.width)
      throw IntegrityError("annotation " + std::to_string(ann.id) + " RLE size does not match its image");
    mask = decode_rle(rle);
  }
  if (mask.popcount() == 0)
    throw EmptyMaskError("annotation " + std::to_string(ann.id) + " rasterizes to an empty mask");
  return mask;
}

Annotation annotation_from_mask(AnnotationId id, ImageId image_id, CategoryId category_id,
                                const BinaryMask& mask) {
  const PixelBox box = tight_bbox(mask);
  Annotation a;
  a.id = id;
  a.image_id = image_id;
  a.category_id = category_id;
  a.segmentation = encode_rle(mask);
  a.bbox = {static_cast<double>(box.x), static_cast<double>(box.y), static_cast<double>(box.w),
            static_cast<double>(box.h)};
  a.area = static_cast<double>(mask.popcount());
  a.iscrowd = false;
  return a;
}

bool annotation_is_sound(const Annotation& ann, const ImageRecord& image, double bbox_tol,
                         double area_rel_tol) {
  const BinaryMask mask = rasterize_mask(ann, image);
  const PixelBox box = tight_bbox(mask);
  const double edges[4][2] = {{static_cast<double>(box.x), ann.bbox.x},
                              {static_cast<double>(box.y), ann.bbox.y},
                              {static_cast<double>(box.right()), ann.bbox.x + ann.bbox.w},
                              {static_cast<double>(box.bottom()), ann.bbox.y + ann.bbox.h}};
  for (const auto& e : edges)
    if (std::abs(e[0] - e[1]) > bbox_tol) return false;
  const double pop = static_cast<double>(mask.popcount());
  return ann.area > 0 && std::abs(pop - ann.area) <= area_rel_tol * ann.area;
}

}  // namespace psis

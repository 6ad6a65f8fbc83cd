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

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "psis/compositor.hpp"

namespace psis {

enum class Side { kA, kB };

/// A synthetic image produced by one side of a switch. Pixels are rendered on
/// demand; the record and annotations are final (ids allocated).
struct GeneratedImage {
  ImageRecord record;
  std::vector<Annotation> annotations;
  Quadruple quad;
  Side side = Side::kA;

  bool operator==(const GeneratedImage&) const = default;
};

/// Hands out fresh image and annotation ids above everything already used.
class IdAllocator {
 public:
  IdAllocator() = default;
  explicit IdAllocator(const DetectionDataset& base)
      : next_image_(base.max_image_id() + 1), next_annotation_(base.max_annotation_id() + 1) {}

  ImageId next_image() { return next_image_++; }
  AnnotationId next_annotation() { return next_annotation_++; }

  nlohmann::ordered_json to_json() const;
  static IdAllocator from_json(const nlohmann::json& j);
  bool operator==(const IdAllocator&) const = default;

 private:
  ImageId next_image_ = 1;
  AnnotationId next_annotation_ = 1;
};

/// Caches switch plans per quadruple. Degenerate switches are cached as null.
/// Safe to call from several threads.
class SwitchPlanner {
 public:
  SwitchPlanner(const DetectionDataset& ds, SwitchOptions opts);

  std::shared_ptr<const SwitchPlan> plan(const Quadruple& q);
  const DetectionDataset& dataset() const { return ds_; }
  const SwitchOptions& options() const { return opts_; }

 private:
  const DetectionDataset& ds_;
  SwitchOptions opts_;
  std::mutex mutex_;
  std::map<std::int64_t, std::shared_ptr<const SwitchPlan>> cache_;
};

/// `{orig_stem}_is{quadruple_id}.png`
std::string synthetic_file_name(const ImageRecord& base, std::int64_t quad_id);

/// Allocates ids for one side of a plan. Annotation order follows the side.
GeneratedImage materialize(const SwitchPlan& plan, Side side, const DetectionDataset& ds, IdAllocator& ids);

Raster render_generated(const GeneratedImage& img, SwitchPlanner& planner, const ImageSource& images);

/// Renders every image and writes it as PNG under `out_dir / record.file_name`.
/// Work is spread over quadruples; output bytes do not depend on `jobs`.
void write_generated(const std::vector<GeneratedImage>& images, SwitchPlanner& planner, const ImageSource& source,
                     const std::filesystem::path& out_dir, int jobs);

/// Dataset holding only the generated images.
DetectionDataset generated_dataset(const std::vector<GeneratedImage>& images, const std::vector<Category>& categories,
                                   const std::filesystem::path& image_root = {});

nlohmann::ordered_json generated_to_json(const GeneratedImage& img);
GeneratedImage generated_from_json(const nlohmann::json& j);

}  // namespace psis

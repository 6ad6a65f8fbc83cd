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
#include <utility>
#include <vector>

#include "psis/coco.hpp"
#include "psis/matching.hpp"
#include "psis/raster.hpp"

namespace psis {

struct BlurConfig {
  double sigma = 1.0;
  int band_width = 3;

  /// Gaussian kernel truncated at 3 sigma.
  int kernel_radius() const;
  void validate() const;
};

struct SwitchOptions {
  BlurConfig blur;
  bool inpaint = true;
  double attach_threshold = 0.5;

  void validate() const;
};

/// Instances on the host's image that mostly lie inside the host's tight box.
struct Attachment {
  AnnotationId host = 0;
  std::vector<AnnotationId> attached;
  std::vector<double> overlap_ratio;
};

/// Same-image, non-crowd instances (any class, host excluded) with at least
/// `threshold` of their own area inside the host's tight box. Inclusive bound.
Attachment find_attachments(const Annotation& host, const DetectionDataset& ds, double threshold = 0.5);

/// x' = scale * x + tx, y' = scale * y + ty.
struct Affine {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  std::pair<double, double> apply(double x, double y) const { return {scale * x + tx, scale * y + ty}; }
  /// Source pixel sampled by the center of target pixel (px, py).
  std::pair<int, int> source_pixel(int px, int py) const;
};

/// Uniform scale fitting `from` into `to`, box centers coinciding.
Affine fit_box(const PixelBox& from, const PixelBox& to);

/// Nearest-neighbour resample of `src` under `t` onto a width x height canvas.
BinaryMask transform_mask(const BinaryMask& src, const Affine& t, int width, int height);

/// Resamples an annotation's mask onto `target`, recomputing bbox and area.
/// Throws ClippedAwayError if nothing survives clipping.
Annotation transform_annotation(const Annotation& ann, const Affine& t, const ImageRecord& source,
                                const ImageRecord& target, AnnotationId new_id);

/// Replaces pixels within `band_width` of the mask boundary by Gaussian-filtered values.
Raster blur_boundary(const Raster& img, const BinaryMask& mask, const BlurConfig& blur);

/// Fills `hole` by repeated averaging of known 8-neighbours until no hole pixel is left.
Raster inpaint_diffusion(const Raster& img, const BinaryMask& hole);

/// One output image of a switch: the base image's background with the source
/// image's host (and its attachments) pasted in.
struct SwitchSide {
  ImageId base_image = 0;
  ImageId source_image = 0;
  Affine transform;                    // source -> base coordinates
  std::vector<AnnotationId> kept;      // base annotations left untouched
  std::vector<AnnotationId> outgoing;  // base host + its attachments
  std::vector<Annotation> incoming;    // transformed, in draw order; ids are the source ids
};

/// Geometry of a switch; no pixels are touched. `a` is derived from image_a.
struct SwitchPlan {
  Quadruple quad;
  SwitchSide a;
  SwitchSide b;

  const SwitchSide& side(bool is_a) const { return is_a ? a : b; }
};

/// Throws DegenerateSwitchError when an incoming instance vanishes.
SwitchPlan plan_switch(const Quadruple& q, const DetectionDataset& ds, const SwitchOptions& opts);

/// Renders one side of a planned switch.
Raster render_side(const SwitchSide& side, const DetectionDataset& ds, const Raster& base, const Raster& source,
                   const SwitchOptions& opts);

/// Annotations of the rendered side: kept ones verbatim, then incoming ones.
std::vector<Annotation> side_annotations(const SwitchSide& side, const DetectionDataset& ds);

struct SwitchProvenance {
  std::int64_t quad_id = 0;
  std::uint64_t seed = 0;
  double sigma = 0;
  int band_width = 0;
  bool inpaint = true;
};

struct SwitchResult {
  SwitchPlan plan;
  Raster image_a_out;
  Raster image_b_out;
  std::vector<Annotation> annotations_a_out;
  std::vector<Annotation> annotations_b_out;
  SwitchProvenance provenance;
};

SwitchResult switch_instances(const Quadruple& q, const DetectionDataset& ds, const ImageSource& images,
                              const SwitchOptions& opts, std::uint64_t seed);

}  // namespace psis

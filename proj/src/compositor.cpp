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

#include "psis/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

int BlurConfig::kernel_radius() const { return static_cast<int>(std::ceil(3.0 * sigma)); }

void BlurConfig::validate() const {
  if (!(sigma > 0)) throw ConfigError("blur sigma must be > 0");
  if (band_width < 1) throw ConfigError("blur band width must be >= 1");
}

void SwitchOptions::validate() const {
  blur.validate();
  if (!(attach_threshold > 0 && attach_threshold <= 1)) throw ConfigError("attach threshold must lie in (0, 1]");
}

Attachment find_attachments(const Annotation& host, const DetectionDataset& ds, double threshold) {
  Attachment out;
  out.host = host.id;
  const ImageRecord& image = ds.image(host.image_id);
  const PixelBox host_box = tight_bbox(rasterize_mask(host, image));
  for (std::size_t idx : ds.annotations_of(host.image_id)) {
    const Annotation& other = ds.annotations()[idx];
    if (other.id == host.id || other.iscrowd) continue;
    BinaryMask m;
    try {
      m = rasterize_mask(other, image);
    } catch (const DataError&) {
      continue;
    }
    const double ratio = static_cast<double>(popcount_in(m, host_box)) / static_cast<double>(m.popcount());
    if (ratio >= threshold) {
      out.attached.push_back(other.id);
      out.overlap_ratio.push_back(ratio);
    }
  }
  return out;
}

std::pair<int, int> Affine::source_pixel(int px, int py) const {
  const double u = (px + 0.5 - tx) / scale;
  const double v = (py + 0.5 - ty) / scale;
  return {static_cast<int>(std::floor(u)), static_cast<int>(std::floor(v))};
}

Affine fit_box(const PixelBox& from, const PixelBox& to) {
  if (from.empty() || to.empty()) throw DegenerateGeometryError("fit_box on an empty box");
  const double s = std::min(static_cast<double>(to.w) / from.w, static_cast<double>(to.h) / from.h);
  const double cfx = from.x + from.w / 2.0, cfy = from.y + from.h / 2.0;
  const double ctx = to.x + to.w / 2.0, cty = to.y + to.h / 2.0;
  return {s, ctx - s * cfx, cty - s * cfy};
}

BinaryMask transform_mask(const BinaryMask& src, const Affine& t, int width, int height) {
  if (!(t.scale > 0)) throw DegenerateGeometryError("transform scale must be > 0");
  BinaryMask out(width, height);
  if (src.popcount() == 0) return out;
  const PixelBox sb = tight_bbox(src);
  const auto [fx0, fy0] = t.apply(sb.x, sb.y);
  const auto [fx1, fy1] = t.apply(sb.right(), sb.bottom());
  const int x0 = std::max(0, static_cast<int>(std::floor(fx0)) - 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(fy0)) - 1);
  const int x1 = std::min(width, static_cast<int>(std::ceil(fx1)) + 1);
  const int y1 = std::min(height, static_cast<int>(std::ceil(fy1)) + 1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const auto [sx, sy] = t.source_pixel(x, y);
      if (src.get(sx, sy)) out.set(x, y);
    }
  }
  return out;
}

Annotation transform_annotation(const Annotation& ann, const Affine& t, const ImageRecord& source,
                                const ImageRecord& target, AnnotationId new_id) {
  const BinaryMask moved = transform_mask(rasterize_mask(ann, source), t, target.width, target.height);
  if (moved.popcount() == 0)
    throw ClippedAwayError("annotation " + std::to_string(ann.id) + " vanishes under the transform");
  return annotation_from_mask(new_id, target.id, ann.category_id, moved);
}

Raster blur_boundary(const Raster& img, const BinaryMask& mask, const BlurConfig& blur) {
  blur.validate();
  if (mask.width() != img.width() || mask.height() != img.height())
    throw DegenerateGeometryError("blur mask does not match the image");
  if (mask.popcount() == 0) return img;
  const BinaryMask band = dilate(boundary(mask), blur.band_width - 1);
  if (band.popcount() == 0) return img;

  const int r = blur.kernel_radius();
  std::vector<double> kernel(2 * r + 1);
  double norm = 0;
  for (int k = -r; k <= r; ++k) {
    kernel[k + r] = std::exp(-(k * k) / (2.0 * blur.sigma * blur.sigma));
    norm += kernel[k + r];
  }
  for (auto& k : kernel) k /= norm;

  const int w = img.width(), h = img.height();
  const PixelBox bb = tight_bbox(band);
  // Horizontal pass over rows the vertical pass can reach.
  const int ry0 = std::max(0, bb.y - r), ry1 = std::min(h, bb.bottom() + r);
  const int cx0 = bb.x, cx1 = bb.right();
  const int bw = cx1 - cx0;
  std::vector<double> horiz(static_cast<std::size_t>(ry1 - ry0) * bw * 3);
  for (int y = ry0; y < ry1; ++y) {
    for (int x = cx0; x < cx1; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * img.channel(std::clamp(x + k, 0, w - 1), y, c);
        horiz[((static_cast<std::size_t>(y - ry0) * bw) + (x - cx0)) * 3 + c] = acc;
      }
    }
  }
  Raster out = img;
  for (int y = bb.y; y < bb.bottom(); ++y) {
    for (int x = bb.x; x < bb.right(); ++x) {
      if (!band.at(x, y)) continue;
      Raster::Pixel p;
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int k = -r; k <= r; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          acc += kernel[k + r] * horiz[((static_cast<std::size_t>(yy - ry0) * bw) + (x - cx0)) * 3 + c];
        }
        p[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
      out.set(x, y, p);
    }
  }
  return out;
}

Raster inpaint_diffusion(const Raster& img, const BinaryMask& hole) {
  if (hole.width() != img.width() || hole.height() != img.height())
    throw DegenerateGeometryError("inpaint mask does not match the image");
  Raster out = img;
  if (hole.popcount() == 0) return out;
  const int w = img.width(), h = img.height();
  BinaryMask unknown = hole;
  std::vector<std::pair<int, int>> pending;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (unknown.at(x, y)) pending.emplace_back(x, y);

  struct Fill {
    int x, y;
    Raster::Pixel value;
  };
  std::vector<Fill> wave;
  while (!pending.empty()) {
    wave.clear();
    std::vector<std::pair<int, int>> still;
    for (const auto& [x, y] : pending) {
      int sum[3] = {0, 0, 0};
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || unknown.at(nx, ny)) continue;
          const auto p = out.at(nx, ny);
          for (int c = 0; c < 3; ++c) sum[c] += p[c];
          ++n;
        }
      }
      if (n == 0) {
        still.emplace_back(x, y);
        continue;
      }
      Raster::Pixel v;
      for (int c = 0; c < 3; ++c) v[c] = static_cast<std::uint8_t>((sum[c] + n / 2) / n);
      wave.push_back({x, y, v});
    }
    if (wave.empty()) break;  // no known pixel anywhere
    for (const auto& f : wave) {
      out.set(f.x, f.y, f.value);
      unknown.set(f.x, f.y, false);
    }
    pending.swap(still);
  }
  return out;
}

namespace {

SwitchSide plan_side(const Annotation& base_host, const Attachment& base_att, const Annotation& src_host,
                     const Attachment& src_att, const Affine& t, const DetectionDataset& ds) {
  const ImageRecord& base_img = ds.image(base_host.image_id);
  const ImageRecord& src_img = ds.image(src_host.image_id);
  SwitchSide side;
  side.base_image = base_img.id;
  side.source_image = src_img.id;
  side.transform = t;

  side.outgoing.push_back(base_host.id);
  side.outgoing.insert(side.outgoing.end(), base_att.attached.begin(), base_att.attached.end());
  for (std::size_t idx : ds.annotations_of(base_img.id)) {
    const AnnotationId id = ds.annotations()[idx].id;
    if (std::find(side.outgoing.begin(), side.outgoing.end(), id) == side.outgoing.end()) side.kept.push_back(id);
  }

  // Host first, then attachments by ascending original area so small ones land on top.
  std::vector<const Annotation*> attached;
  for (AnnotationId id : src_att.attached) attached.push_back(&ds.annotation(id));
  std::vector<std::int64_t> areas;
  std::vector<std::size_t> order(attached.size());
  for (std::size_t i = 0; i < attached.size(); ++i) {
    order[i] = i;
    areas.push_back(rasterize_mask(*attached[i], src_img).popcount());
  }
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::tie(areas[x], attached[x]->id) < std::tie(areas[y], attached[y]->id);
  });
  std::vector<const Annotation*> draw{&src_host};
  for (std::size_t i : order) draw.push_back(attached[i]);

  for (const Annotation* a : draw) {
    try {
      side.incoming.push_back(transform_annotation(*a, t, src_img, base_img, a->id));
    } catch (const ClippedAwayError&) {
      throw DegenerateSwitchError("instance " + std::to_string(a->id) + " vanishes when pasted into image " +
                                  std::to_string(base_img.id));
    }
  }
  return side;
}

}  // namespace

SwitchPlan plan_switch(const Quadruple& q, const DetectionDataset& ds, const SwitchOptions& opts) {
  const Annotation& ann_a = ds.annotation(q.inst_a);
  const Annotation& ann_b = ds.annotation(q.inst_b);
  if (ann_a.image_id != q.image_a || ann_b.image_id != q.image_b || ann_a.category_id != q.class_id ||
      ann_b.category_id != q.class_id || q.image_a == q.image_b)
    throw IntegrityError("quadruple " + std::to_string(q.id) + " is inconsistent with the dataset");
  const PixelBox box_a = tight_bbox(rasterize_mask(ann_a, ds.image(q.image_a)));
  const PixelBox box_b = tight_bbox(rasterize_mask(ann_b, ds.image(q.image_b)));
  const Attachment att_a = find_attachments(ann_a, ds, opts.attach_threshold);
  const Attachment att_b = find_attachments(ann_b, ds, opts.attach_threshold);

  SwitchPlan plan;
  plan.quad = q;
  plan.a = plan_side(ann_a, att_a, ann_b, att_b, fit_box(box_b, box_a), ds);
  plan.b = plan_side(ann_b, att_b, ann_a, att_a, fit_box(box_a, box_b), ds);
  return plan;
}

Raster render_side(const SwitchSide& side, const DetectionDataset& ds, const Raster& base, const Raster& source,
                   const SwitchOptions& opts) {
  const ImageRecord& base_img = ds.image(side.base_image);
  if (base.width() != base_img.width || base.height() != base_img.height)
    throw IntegrityError("base raster does not match image " + std::to_string(base_img.id));

  BinaryMask vacated(base_img.width, base_img.height);
  for (AnnotationId id : side.outgoing) vacated |= rasterize_mask(ds.annotation(id), base_img);

  std::vector<BinaryMask> incoming;
  BinaryMask pasted(base_img.width, base_img.height);
  for (const auto& ann : side.incoming) {
    incoming.push_back(rasterize_mask(ann, base_img));
    pasted |= incoming.back();
  }

  Raster out = base;
  if (opts.inpaint) {
    BinaryMask hole = vacated;
    hole.subtract(pasted);
    out = inpaint_diffusion(out, hole);
  }
  for (const auto& m : incoming) {
    const PixelBox box = tight_bbox(m);
    for (int y = box.y; y < box.bottom(); ++y) {
      for (int x = box.x; x < box.right(); ++x) {
        if (!m.at(x, y)) continue;
        const auto [sx, sy] = side.transform.source_pixel(x, y);
        out.set(x, y, source.at(std::clamp(sx, 0, source.width() - 1), std::clamp(sy, 0, source.height() - 1)));
      }
    }
  }
  return blur_boundary(out, pasted, opts.blur);
}

std::vector<Annotation> side_annotations(const SwitchSide& side, const DetectionDataset& ds) {
  std::vector<Annotation> out;
  for (AnnotationId id : side.kept) out.push_back(ds.annotation(id));
  for (const auto& a : side.incoming) out.push_back(a);
  return out;
}

SwitchResult switch_instances(const Quadruple& q, const DetectionDataset& ds, const ImageSource& images,
                              const SwitchOptions& opts, std::uint64_t seed) {
  opts.validate();
  SwitchResult r;
  r.plan = plan_switch(q, ds, opts);
  const Raster img_a = images.load(ds.image(q.image_a));
  const Raster img_b = images.load(ds.image(q.image_b));
  r.image_a_out = render_side(r.plan.a, ds, img_a, img_b, opts);
  r.image_b_out = render_side(r.plan.b, ds, img_b, img_a, opts);
  r.annotations_a_out = side_annotations(r.plan.a, ds);
  r.annotations_b_out = side_annotations(r.plan.b, ds);
  r.provenance = {q.id, seed, opts.blur.sigma, opts.blur.band_width, opts.inpaint};
  return r;
}

}  // namespace psis

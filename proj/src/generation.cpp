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

#include "psis/generation.hpp"

#include <algorithm>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

nlohmann::ordered_json IdAllocator::to_json() const {
  nlohmann::ordered_json j;
  j["next_image"] = next_image_;
  j["next_annotation"] = next_annotation_;
  return j;
}

IdAllocator IdAllocator::from_json(const nlohmann::json& j) {
  IdAllocator a;
  a.next_image_ = j.at("next_image").get<ImageId>();
  a.next_annotation_ = j.at("next_annotation").get<AnnotationId>();
  return a;
}

SwitchPlanner::SwitchPlanner(const DetectionDataset& ds, SwitchOptions opts) : ds_(ds), opts_(opts) {
  opts_.validate();
}

std::shared_ptr<const SwitchPlan> SwitchPlanner::plan(const Quadruple& q) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(q.id); it != cache_.end()) return it->second;
  }
  std::shared_ptr<const SwitchPlan> result;
  try {
    result = std::make_shared<const SwitchPlan>(plan_switch(q, ds_, opts_));
  } catch (const DegenerateSwitchError& e) {
    log_event("warn", "degenerate_switch", {{"quadruple", std::to_string(q.id)}, {"reason", e.what()}});
  }
  std::lock_guard lock(mutex_);
  cache_.emplace(q.id, result);
  return result;
}

std::string synthetic_file_name(const ImageRecord& base, std::int64_t quad_id) {
  return std::filesystem::path(base.file_name).stem().string() + "_is" + std::to_string(quad_id) + ".png";
}

GeneratedImage materialize(const SwitchPlan& plan, Side side, const DetectionDataset& ds, IdAllocator& ids) {
  const SwitchSide& s = plan.side(side == Side::kA);
  const ImageRecord& base = ds.image(s.base_image);
  GeneratedImage g;
  g.quad = plan.quad;
  g.side = side;
  g.record = {ids.next_image(), synthetic_file_name(base, plan.quad.id), base.width, base.height};
  g.annotations = side_annotations(s, ds);
  for (auto& a : g.annotations) {
    a.id = ids.next_annotation();
    a.image_id = g.record.id;
  }
  return g;
}

Raster render_generated(const GeneratedImage& img, SwitchPlanner& planner, const ImageSource& images) {
  const auto plan = planner.plan(img.quad);
  if (!plan) throw DegenerateSwitchError("cannot render degenerate quadruple " + std::to_string(img.quad.id));
  const SwitchSide& s = plan->side(img.side == Side::kA);
  const DetectionDataset& ds = planner.dataset();
  return render_side(s, ds, images.load(ds.image(s.base_image)), images.load(ds.image(s.source_image)),
                     planner.options());
}

void write_generated(const std::vector<GeneratedImage>& images, SwitchPlanner& planner, const ImageSource& source,
                     const std::filesystem::path& out_dir, int jobs) {
  std::filesystem::create_directories(out_dir);
  // Both sides of a quadruple share their two source images; render them together.
  std::map<std::int64_t, std::vector<const GeneratedImage*>> by_quad;
  for (const auto& g : images) by_quad[g.quad.id].push_back(&g);
  std::vector<std::vector<const GeneratedImage*>> groups;
  for (auto& [_, v] : by_quad) groups.push_back(std::move(v));

  const DetectionDataset& ds = planner.dataset();
  parallel_for(groups.size(), jobs, [&](std::size_t k) {
    const auto& group = groups[k];
    const auto plan = planner.plan(group.front()->quad);
    if (!plan) throw DegenerateSwitchError("cannot render degenerate quadruple " + std::to_string(group.front()->quad.id));
    const Raster img_a = source.load(ds.image(plan->quad.image_a));
    const Raster img_b = source.load(ds.image(plan->quad.image_b));
    for (const GeneratedImage* g : group) {
      const bool is_a = g->side == Side::kA;
      const Raster out = render_side(plan->side(is_a), ds, is_a ? img_a : img_b, is_a ? img_b : img_a,
                                     planner.options());
      save_image(out, out_dir / g->record.file_name);
    }
  });
}

DetectionDataset generated_dataset(const std::vector<GeneratedImage>& images, const std::vector<Category>& categories,
                                   const std::filesystem::path& image_root) {
  std::vector<ImageRecord> recs;
  std::vector<Annotation> anns;
  for (const auto& g : images) {
    recs.push_back(g.record);
    anns.insert(anns.end(), g.annotations.begin(), g.annotations.end());
  }
  return DetectionDataset(std::move(recs), std::move(anns), categories, image_root);
}

nlohmann::ordered_json generated_to_json(const GeneratedImage& img) {
  nlohmann::ordered_json j;
  j["id"] = img.record.id;
  j["file_name"] = img.record.file_name;
  j["width"] = img.record.width;
  j["height"] = img.record.height;
  j["quad"] = {{"id", img.quad.id},         {"class_id", img.quad.class_id}, {"image_a", img.quad.image_a},
               {"image_b", img.quad.image_b}, {"inst_a", img.quad.inst_a},     {"inst_b", img.quad.inst_b},
               {"shape", img.quad.shape}};
  j["side"] = img.side == Side::kA ? "A" : "B";
  nlohmann::ordered_json anns = nlohmann::ordered_json::array();
  for (const auto& a : img.annotations) anns.push_back(annotation_to_json(a));
  j["annotations"] = std::move(anns);
  return j;
}

GeneratedImage generated_from_json(const nlohmann::json& j) {
  GeneratedImage g;
  g.record = {j.at("id").get<ImageId>(), j.at("file_name").get<std::string>(), j.at("width").get<int>(),
              j.at("height").get<int>()};
  const auto& q = j.at("quad");
  g.quad = {q.at("id").get<std::int64_t>(),   q.at("class_id").get<CategoryId>(), q.at("image_a").get<ImageId>(),
            q.at("image_b").get<ImageId>(),   q.at("inst_a").get<AnnotationId>(), q.at("inst_b").get<AnnotationId>(),
            q.at("shape").get<double>()};
  g.side = j.at("side").get<std::string>() == "A" ? Side::kA : Side::kB;
  for (const auto& a : j.at("annotations")) g.annotations.push_back(annotation_from_json(a));
  return g;
}

}  // namespace psis

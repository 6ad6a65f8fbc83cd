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

#include "psis/matching.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

namespace {

/// Normalized mask packed into 64-bit words for XOR popcounts.
struct PackedMask {
  std::vector<std::uint64_t> words;
  std::int64_t ones = 0;
};

PackedMask pack(const BinaryMask& m) {
  PackedMask p;
  const auto bits = m.bits();
  p.words.assign((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) {
      p.words[i / 64] |= std::uint64_t{1} << (i % 64);
      ++p.ones;
    }
  }
  return p;
}

std::int64_t xor_count(const PackedMask& a, const PackedMask& b) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) n += std::popcount(a.words[i] ^ b.words[i]);
  return n;
}

struct Candidate {
  const Annotation* ann = nullptr;
  std::int64_t area = 0;
  PackedMask normalized;
};

std::vector<Candidate> switchable_instances(const DetectionDataset& ds, const MatchConfig& cfg,
                                            CategoryId class_id) {
  std::vector<Candidate> out;
  for (const auto& ann : ds.annotations()) {
    if (ann.category_id != class_id || ann.iscrowd) continue;
    const ImageRecord& image = ds.image(ann.image_id);
    BinaryMask mask;
    try {
      mask = rasterize_mask(ann, image);
    } catch (const DataError& e) {
      log_event("warn", "skip_instance", {{"annotation", std::to_string(ann.id)}, {"reason", e.what()}});
      continue;
    }
    const PixelBox box = tight_bbox(mask);
    if (border_touch_fraction(box, image.width, image.height) > cfg.border_touch_limit) continue;
    out.push_back({&ann, mask.popcount(), pack(normalize_mask(mask, cfg.normalized_size))});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.ann->id < b.ann->id; });
  return out;
}

std::vector<ScoredPair> score_class(const std::vector<Candidate>& inst, const MatchConfig& cfg) {
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    for (std::size_t j = i + 1; j < inst.size(); ++j) {
      const Candidate& a = inst[i];
      const Candidate& b = inst[j];
      if (a.ann->image_id == b.ann->image_id) continue;
      const AreaRatio scale{b.area, a.area};
      if (!scale.strictly_between(cfg.rho1, cfg.rho2)) continue;
      const double shape = static_cast<double>(xor_count(a.normalized, b.normalized)) /
                           static_cast<double>(std::max(a.normalized.ones, b.normalized.ones));
      if (!(shape < cfg.epsilon)) continue;
      pairs.push_back({a.ann->id, b.ann->id, a.ann->image_id, b.ann->image_id, shape, scale});
    }
  }
  return pairs;
}

std::vector<Quadruple> greedy_match(std::vector<ScoredPair> pairs, CategoryId class_id) {
  std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& x, const ScoredPair& y) {
    return std::tie(x.shape, x.inst_a, x.inst_b) < std::tie(y.shape, y.inst_a, y.inst_b);
  });
  std::set<AnnotationId> used;
  std::vector<Quadruple> quads;
  for (const auto& p : pairs) {
    if (used.count(p.inst_a) || used.count(p.inst_b)) continue;
    used.insert(p.inst_a);
    used.insert(p.inst_b);
    quads.push_back({0, class_id, p.image_a, p.image_b, p.inst_a, p.inst_b, p.shape});
  }
  return quads;
}

}  // namespace

void MatchConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (!(rho1 > 0) || !(rho1 < rho2)) throw ConfigError("scale bounds must satisfy 0 < rho1 < rho2");
  if (normalized_size < 8) throw ConfigError("normalized size must be >= 8");
  if (!(border_touch_limit >= 0 && border_touch_limit <= 1))
    throw ConfigError("border touch limit must lie in [0, 1]");
}

BinaryMask normalize_mask(const BinaryMask& mask, int size) {
  const PixelBox box = tight_bbox(mask);
  BinaryMask out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = box.y + static_cast<int>((static_cast<std::int64_t>(2 * y + 1) * box.h) / (2 * size));
    for (int x = 0; x < size; ++x) {
      const int sx = box.x + static_cast<int>((static_cast<std::int64_t>(2 * x + 1) * box.w) / (2 * size));
      if (mask.at(sx, sy)) out.set(x, y);
    }
  }
  return out;
}

NormalizedMaskPair normalize_masks(const BinaryMask& m_a, const BinaryMask& m_b, int size) {
  if (m_a.popcount() == 0 || m_b.popcount() == 0) throw EmptyMaskError("normalize_masks on an empty mask");
  return {normalize_mask(m_a, size), normalize_mask(m_b, size)};
}

double f_shape(const NormalizedMaskPair& pair) {
  if (pair.a.width() != pair.b.width() || pair.a.height() != pair.b.height())
    throw DegenerateGeometryError("normalized masks differ in size");
  const std::int64_t diff = xor_count(pack(pair.a), pack(pair.b));
  const std::int64_t denom = std::max(pair.a.popcount(), pair.b.popcount());
  if (denom == 0) throw EmptyMaskError("f_shape of empty normalized masks");
  return static_cast<double>(diff) / static_cast<double>(denom);
}

AreaRatio f_scale(const BinaryMask& m_a, const BinaryMask& m_b) {
  const std::int64_t a = m_a.popcount(), b = m_b.popcount();
  if (a == 0 || b == 0) throw EmptyMaskError("f_scale of an empty mask");
  return {b, a};
}

AreaRatio f_scale(const Annotation& inst_a, const Annotation& inst_b, const DetectionDataset& ds) {
  return f_scale(rasterize_mask(inst_a, ds.image(inst_a.image_id)),
                 rasterize_mask(inst_b, ds.image(inst_b.image_id)));
}

double border_touch_fraction(const PixelBox& box, int image_width, int image_height) {
  if (box.empty()) return 0.0;
  double on_border = 0;
  if (box.x <= 0) on_border += box.h;
  if (box.right() >= image_width) on_border += box.h;
  if (box.y <= 0) on_border += box.w;
  if (box.bottom() >= image_height) on_border += box.w;
  return on_border / (2.0 * (box.w + box.h));
}

std::vector<ScoredPair> accepted_pairs(const DetectionDataset& ds, const MatchConfig& cfg, CategoryId class_id) {
  cfg.validate();
  return score_class(switchable_instances(ds, cfg, class_id), cfg);
}

// ---------------------------------------------------------------------------
// CandidateSet

const CandidateSet::Pool& CandidateSet::pool(CategoryId class_id) const {
  auto it = pools_.find(class_id);
  if (it == pools_.end()) throw UnknownClassError("candidate set has no class " + std::to_string(class_id));
  return it->second;
}

CandidateSet::Pool& CandidateSet::pool(CategoryId class_id) {
  auto it = pools_.find(class_id);
  if (it == pools_.end()) throw UnknownClassError("candidate set has no class " + std::to_string(class_id));
  return it->second;
}

void CandidateSet::add_class(CategoryId class_id, std::vector<Quadruple> quads) {
  if (pools_.count(class_id)) throw IntegrityError("duplicate candidate class " + std::to_string(class_id));
  Pool& p = pools_[class_id];
  for (std::size_t i = 0; i < quads.size(); ++i) {
    if (quads[i].class_id != class_id) throw IntegrityError("quadruple class does not match its pool");
    if (!where_.emplace(quads[i].id, std::pair{class_id, i}).second)
      throw IntegrityError("duplicate quadruple id " + std::to_string(quads[i].id));
  }
  p.consumed.assign(quads.size(), false);
  p.quads = std::move(quads);
}

std::optional<Quadruple> CandidateSet::take(CategoryId class_id) {
  Pool& p = pool(class_id);
  while (p.cursor < p.quads.size() && p.consumed[p.cursor]) ++p.cursor;
  if (p.cursor == p.quads.size()) return std::nullopt;
  p.consumed[p.cursor] = true;
  return p.quads[p.cursor++];
}

bool CandidateSet::consume(std::int64_t quad_id) {
  auto it = where_.find(quad_id);
  if (it == where_.end()) throw IntegrityError("unknown quadruple id " + std::to_string(quad_id));
  Pool& p = pools_.at(it->second.first);
  if (p.consumed[it->second.second]) return false;
  p.consumed[it->second.second] = true;
  return true;
}

bool CandidateSet::is_consumed(std::int64_t quad_id) const {
  auto it = where_.find(quad_id);
  if (it == where_.end()) throw IntegrityError("unknown quadruple id " + std::to_string(quad_id));
  return pools_.at(it->second.first).consumed[it->second.second];
}

const Quadruple& CandidateSet::quadruple(std::int64_t quad_id) const {
  auto it = where_.find(quad_id);
  if (it == where_.end()) throw IntegrityError("unknown quadruple id " + std::to_string(quad_id));
  return pools_.at(it->second.first).quads[it->second.second];
}

std::vector<Quadruple> CandidateSet::available(CategoryId class_id) const {
  const Pool& p = pool(class_id);
  std::vector<Quadruple> out;
  for (std::size_t i = 0; i < p.quads.size(); ++i)
    if (!p.consumed[i]) out.push_back(p.quads[i]);
  return out;
}

const std::vector<Quadruple>& CandidateSet::all(CategoryId class_id) const { return pool(class_id).quads; }

std::vector<CategoryId> CandidateSet::classes() const {
  std::vector<CategoryId> out;
  for (const auto& [c, _] : pools_) out.push_back(c);
  return out;
}

std::size_t CandidateSet::size(CategoryId class_id) const { return pool(class_id).quads.size(); }

std::size_t CandidateSet::remaining(CategoryId class_id) const {
  const Pool& p = pool(class_id);
  return static_cast<std::size_t>(std::count(p.consumed.begin(), p.consumed.end(), false));
}

std::size_t CandidateSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [c, p] : pools_) n += p.quads.size();
  return n;
}

std::size_t CandidateSet::total_remaining() const {
  std::size_t n = 0;
  for (const auto& [c, _] : pools_) n += remaining(c);
  return n;
}

nlohmann::ordered_json CandidateSet::to_json() const {
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& [c, p] : pools_) {
    nlohmann::ordered_json quads = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.quads.size(); ++i) {
      const Quadruple& q = p.quads[i];
      nlohmann::ordered_json o;
      o["id"] = q.id;
      o["image_a"] = q.image_a;
      o["image_b"] = q.image_b;
      o["inst_a"] = q.inst_a;
      o["inst_b"] = q.inst_b;
      o["shape"] = q.shape;
      o["consumed"] = static_cast<bool>(p.consumed[i]);
      quads.push_back(std::move(o));
    }
    nlohmann::ordered_json entry;
    entry["class_id"] = c;
    entry["quadruples"] = std::move(quads);
    classes.push_back(std::move(entry));
  }
  nlohmann::ordered_json root;
  root["classes"] = std::move(classes);
  return root;
}

CandidateSet CandidateSet::from_json(const nlohmann::json& j) {
  CandidateSet cs;
  try {
    for (const auto& entry : j.at("classes")) {
      const CategoryId c = entry.at("class_id").get<CategoryId>();
      std::vector<Quadruple> quads;
      std::vector<bool> consumed;
      for (const auto& o : entry.at("quadruples")) {
        quads.push_back({o.at("id").get<std::int64_t>(), c, o.at("image_a").get<ImageId>(),
                         o.at("image_b").get<ImageId>(), o.at("inst_a").get<AnnotationId>(),
                         o.at("inst_b").get<AnnotationId>(), o.at("shape").get<double>()});
        consumed.push_back(o.at("consumed").get<bool>());
      }
      cs.add_class(c, std::move(quads));
      cs.pools_[c].consumed = std::move(consumed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed candidate set: ") + e.what());
  }
  return cs;
}

void CandidateSet::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write candidate set " + path.string());
  f << to_json().dump(1) << '\n';
}

CandidateSet CandidateSet::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open candidate set " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed candidate set: ") + e.what(), e.byte);
  }
  return from_json(j);
}

CandidateSet build_candidate_set(const DetectionDataset& ds, const MatchConfig& cfg, std::uint64_t seed, int jobs) {
  cfg.validate();
  const std::vector<CategoryId> classes = ds.category_ids();
  std::vector<std::vector<Quadruple>> per_class(classes.size());
  parallel_for(classes.size(), jobs, [&](std::size_t k) {
    const CategoryId c = classes[k];
    std::vector<Quadruple> quads = greedy_match(score_class(switchable_instances(ds, cfg, c), cfg), c);
    const std::uint64_t class_seed = sub_seed(seed, static_cast<std::uint64_t>(c));
    if (cfg.max_pairs_per_class > 0 && quads.size() > cfg.max_pairs_per_class) {
      seeded_shuffle(quads, splitmix64(class_seed));
      quads.resize(cfg.max_pairs_per_class);
    }
    seeded_shuffle(quads, class_seed);
    per_class[k] = std::move(quads);
  });

  CandidateSet cs;
  std::int64_t next_id = 1;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    for (auto& q : per_class[k]) q.id = next_id++;
    cs.add_class(classes[k], std::move(per_class[k]));
  }
  return cs;
}

}  // namespace psis

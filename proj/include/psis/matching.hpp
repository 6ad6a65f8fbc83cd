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
#include <optional>
#include <unordered_map>
#include <vector>

#include "psis/coco.hpp"
#include "psis/mask.hpp"

namespace psis {

struct MatchConfig {
  double epsilon = 0.3;
  double rho1 = 1.0 / 3.0;
  double rho2 = 3.0;
  int normalized_size = 64;
  /// 0 keeps every quadruple.
  std::size_t max_pairs_per_class = 0;
  /// Instances whose box lies on the image border for more than this fraction
  /// of its perimeter are not switchable.
  double border_touch_limit = 0.4;

  void validate() const;
};

/// Two masks cropped to their tight boxes and resampled to a common S x S grid.
struct NormalizedMaskPair {
  BinaryMask a;
  BinaryMask b;
};

/// Tight-crop then nearest-neighbour resample to size x size.
BinaryMask normalize_mask(const BinaryMask& mask, int size);
NormalizedMaskPair normalize_masks(const BinaryMask& m_a, const BinaryMask& m_b, int size);

/// Differing-pixel count over the larger of the two areas.
double f_shape(const NormalizedMaskPair& pair);

/// Exact ratio area(b) / area(a) of integer pixel counts.
struct AreaRatio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// lo < num/den < hi
  /// Compares the rounded quotient, so a ratio equal to a bound such as 1/3
  /// rounds onto the bound and is rejected.
  bool strictly_between(double lo, double hi) const { return value() > lo && value() < hi; }
};

AreaRatio f_scale(const BinaryMask& m_a, const BinaryMask& m_b);
AreaRatio f_scale(const Annotation& inst_a, const Annotation& inst_b, const DetectionDataset& ds);

/// Fraction of the box perimeter that lies on the image border.
double border_touch_fraction(const PixelBox& box, int image_width, int image_height);

struct Quadruple {
  std::int64_t id = 0;
  CategoryId class_id = 0;
  ImageId image_a = 0;
  ImageId image_b = 0;
  AnnotationId inst_a = 0;
  AnnotationId inst_b = 0;
  double shape = 0;

  bool operator==(const Quadruple&) const = default;
};

/// A same-class instance pair on distinct images that passed both constraints.
struct ScoredPair {
  AnnotationId inst_a = 0;  // lower annotation id
  AnnotationId inst_b = 0;
  ImageId image_a = 0;
  ImageId image_b = 0;
  double shape = 0;
  AreaRatio scale;
};

/// Every accepted pair of one class, before the one-quadruple-per-instance step.
std::vector<ScoredPair> accepted_pairs(const DetectionDataset& ds, const MatchConfig& cfg, CategoryId class_id);

/// Per-class pools of switchable quadruples with consumption bookkeeping.
class CandidateSet {
 public:
  CandidateSet() = default;

  /// Next unconsumed quadruple in stored order, marked consumed. Throws
  /// UnknownClassError for classes the set was not built over.
  std::optional<Quadruple> take(CategoryId class_id);

  /// Marks a specific quadruple consumed. Returns false if it already was.
  bool consume(std::int64_t quad_id);
  bool is_consumed(std::int64_t quad_id) const;
  const Quadruple& quadruple(std::int64_t quad_id) const;

  /// Unconsumed quadruples of a class, in stored order.
  std::vector<Quadruple> available(CategoryId class_id) const;

  std::vector<CategoryId> classes() const;
  bool has_class(CategoryId class_id) const { return pools_.count(class_id) != 0; }
  std::size_t size(CategoryId class_id) const;
  std::size_t remaining(CategoryId class_id) const;
  std::size_t total_size() const;
  std::size_t total_remaining() const;
  /// All quadruples of a class in stored order, consumed or not.
  const std::vector<Quadruple>& all(CategoryId class_id) const;

  nlohmann::ordered_json to_json() const;
  static CandidateSet from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static CandidateSet load(const std::filesystem::path& path);

  /// Appends a class pool; quadruples keep their given order and ids.
  void add_class(CategoryId class_id, std::vector<Quadruple> quads);

 private:
  struct Pool {
    std::vector<Quadruple> quads;
    std::vector<bool> consumed;
    std::size_t cursor = 0;  // everything before it is consumed
  };
  const Pool& pool(CategoryId class_id) const;
  Pool& pool(CategoryId class_id);

  std::map<CategoryId, Pool> pools_;
  std::unordered_map<std::int64_t, std::pair<CategoryId, std::size_t>> where_;
};

/// Builds pools for every category of `ds`. Within a class, accepted pairs are
/// matched greedily in ascending f_shape order (ties by annotation ids) so each
/// instance joins at most one quadruple; the survivors are optionally capped,
/// then shuffled with a per-class sub-seed. Ids are assigned in class order.
CandidateSet build_candidate_set(const DetectionDataset& ds, const MatchConfig& cfg, std::uint64_t seed,
                                 int jobs = 1);

}  // namespace psis

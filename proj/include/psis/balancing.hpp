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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "psis/coco.hpp"
#include "psis/generation.hpp"
#include "psis/matching.hpp"

namespace psis {

/// Per-class instance counts of one image.
struct ImageProfile {
  ImageId image = 0;
  std::map<CategoryId, std::int64_t> counts;
  std::int64_t total = 0;

  std::int64_t count(CategoryId c) const {
    auto it = counts.find(c);
    return it == counts.end() ? 0 : it->second;
  }
};

ImageProfile profile_of(ImageId image, std::span<const Annotation> annotations);
ImageProfile profile_of(const GeneratedImage& img);

/// Per-class instance counts of a set of images, maintained incrementally.
class InstanceDistribution {
 public:
  InstanceDistribution() = default;
  /// Registers `classes` with zero counts so they appear in shares and exports.
  explicit InstanceDistribution(const std::vector<CategoryId>& classes);

  void add(const ImageProfile& p);
  void remove(const ImageProfile& p);

  std::int64_t count(CategoryId c) const;
  std::int64_t total() const { return total_; }
  double share(CategoryId c) const;
  const std::map<CategoryId, std::int64_t>& counts() const { return counts_; }

  bool operator==(const InstanceDistribution&) const = default;

 private:
  std::map<CategoryId, std::int64_t> counts_;
  std::int64_t total_ = 0;
};

/// Exact per-class counts over every annotation of `ds` (all categories listed).
InstanceDistribution distribution_stats(const DetectionDataset& ds);
InstanceDistribution distribution_of(std::span<const GeneratedImage> images, const std::vector<CategoryId>& classes);

/// Shannon entropy of the class shares divided by log(C), C = registered classes.
/// Returns 1 for a single class and 0 for an empty distribution.
double normalized_entropy(const InstanceDistribution& dist);

/// `class_id,name,count,share` rows in ascending class id.
void write_histogram_csv(const InstanceDistribution& dist, const std::vector<Category>& categories, std::ostream& out);

/// (M_c - M_Ic)/(M - M_I) < M_c/M < (M_c + M_Ic)/(M + M_I), evaluated exactly.
/// Throws DegenerateDistributionError unless 0 <= M_Ic <= M_I < M and 0 <= M_c <= M.
bool drop_pick_condition(std::int64_t m_c, std::int64_t m, std::int64_t m_ic, std::int64_t m_i);
bool drop_pick_condition(const InstanceDistribution& dist, const ImageProfile& profile, CategoryId class_id);

struct EqualSampleResult {
  std::vector<GeneratedImage> images;
  std::map<CategoryId, std::size_t> quadruples_used;
  std::map<CategoryId, std::size_t> shortfall;
};

/// Consumes floor(target / (2C)) quadruples per class (two images each).
/// Shortfalls are logged, not redistributed. Throws NothingToSampleError when
/// the candidate set has nothing left at all.
EqualSampleResult equal_sample(CandidateSet& cs, std::size_t target_total_images, SwitchPlanner& planner,
                               IdAllocator& ids);

enum class BaselineScope { kEqualized, kOriginal };

struct BalanceConfig {
  int stage1_iterations = 20;
  double min_growth = 1.5;
  double max_shrink = 0.5;
  /// Relative deviation from the uniform share 1/C tolerated by stage 2.
  double stage2_tolerance = 0.1;
  BaselineScope baseline = BaselineScope::kEqualized;

  void validate() const;
};

enum class MoveKind { kPick, kDrop };

/// One committed move, with the counts observed right before it.
struct Move {
  MoveKind kind = MoveKind::kPick;
  ImageId image = 0;
  CategoryId class_id = 0;
  std::int64_t m_c = 0;
  std::int64_t m = 0;
  std::int64_t m_ic = 0;
  std::int64_t m_i = 0;

  bool operator==(const Move&) const = default;
};

/// `pick|drop,image_id,class_id,M_c,M,M_Ic,M_I`, one move per line.
void write_move_log(std::span<const Move> moves, std::ostream& out);
std::vector<Move> read_move_log(std::istream& in);

struct BalanceOutcome {
  std::vector<GeneratedImage> images;
  std::vector<Move> moves;
  /// Every image ever picked, including ones dropped again later.
  std::vector<GeneratedImage> picked;
  /// Stage-1 iterations that stopped because no valid move pair was left.
  int exhausted_iterations = 0;
};

/// Greedy drop-pick balancer over a working set of generated images. Every
/// pick adds a fresh image synthesized from an unused quadruple; every drop
/// removes a working-set image. Moves are committed in pick/drop pairs, so the
/// set size never changes.
class Balancer {
 public:
  Balancer(std::vector<GeneratedImage> working_set, CandidateSet& cs, SwitchPlanner& planner, IdAllocator& ids,
           BalanceConfig cfg, std::vector<CategoryId> classes);

  /// Stage 1: repeatedly take the min/max classes and move until the min share
  /// reaches min_growth x baseline and the max share falls to max_shrink x
  /// baseline, or no valid pair is left. Baseline defaults to the working set
  /// shares at construction. A target once reached becomes a floor (or
  /// ceiling) that no later move, in either stage, may cross again.
  void run_stage1(const std::map<CategoryId, double>* baseline = nullptr);

  /// Stage 2: classes in descending deviation from 1/C, each moved until within
  /// tolerance or no improving valid pair exists.
  void run_stage2();

  BalanceOutcome outcome() const;
  const InstanceDistribution& distribution() const { return dist_; }
  const std::vector<Move>& moves() const { return moves_; }
  int exhausted_iterations() const { return exhausted_; }

 private:
  struct Member {
    GeneratedImage image;
    ImageProfile profile;
    bool alive = true;
  };
  struct PoolItem {
    Quadruple quad;
    Side side;
    std::shared_ptr<const SwitchPlan> plan;
    ImageProfile profile;
    bool used = false;
  };

  std::vector<PoolItem>& pool(CategoryId c);
  std::optional<std::size_t> best_pick(CategoryId c, const InstanceDistribution& dist);
  std::optional<std::size_t> best_drop(CategoryId c, const InstanceDistribution& dist) const;
  /// Tries one pick(pick_class) + drop(drop_class) pair; commits it only when
  /// both are valid and `accept` approves the resulting distribution.
  template <typename Accept>
  bool try_pair(CategoryId pick_class, CategoryId drop_class, Accept&& accept);
  std::vector<CategoryId> present_classes() const;
  bool locks_hold(const InstanceDistribution& d) const;
  void update_locks(CategoryId cmin, double min_target, CategoryId cmax, double max_target);

  std::vector<Member> members_;
  CandidateSet& cs_;
  SwitchPlanner& planner_;
  IdAllocator& ids_;
  BalanceConfig cfg_;
  std::vector<CategoryId> classes_;
  InstanceDistribution dist_;
  std::map<CategoryId, double> entry_shares_;
  std::map<CategoryId, std::vector<PoolItem>> pools_;
  std::map<CategoryId, double> floors_;
  std::map<CategoryId, double> ceilings_;
  std::vector<Move> moves_;
  std::vector<GeneratedImage> picked_;
  int exhausted_ = 0;
};

BalanceOutcome balance_stage1(std::vector<GeneratedImage> equalized, CandidateSet& cs, const BalanceConfig& cfg,
                              SwitchPlanner& planner, IdAllocator& ids, const std::vector<CategoryId>& classes,
                              const std::map<CategoryId, double>* baseline = nullptr);
BalanceOutcome balance_stage2(std::vector<GeneratedImage> intermediate, CandidateSet& cs, const BalanceConfig& cfg,
                              SwitchPlanner& planner, IdAllocator& ids, const std::vector<CategoryId>& classes);

}  // namespace psis

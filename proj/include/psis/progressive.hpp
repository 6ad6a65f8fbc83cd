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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psis/balancing.hpp"
#include "psis/generation.hpp"
#include "psis/loss_weights.hpp"
#include "psis/matching.hpp"

namespace psis {

/// Per-class AP of the current detector on the validation set.
struct ApReport {
  int epoch = 0;
  std::string source;
  std::map<CategoryId, double> ap;

  /// Throws DataError for AP outside [0, 1], MissingClassError when a class of
  /// `classes` has no AP and UnknownClassError for ids outside `classes`.
  void validate(const std::vector<CategoryId>& classes) const;

  nlohmann::ordered_json to_json() const;
  static ApReport from_json(const nlohmann::json& j);
  bool operator==(const ApReport&) const = default;
};

/// `{"epoch": t, "source": "...", "ap": {"<category id>": ap, ...}}`
ApReport load_ap_report(const std::filesystem::path& path);
void save_ap_report(const ApReport& report, const std::filesystem::path& path);

/// Supplies AP reports at scheduled epochs. An empty result pauses the pipeline.
class ApSource {
 public:
  virtual ~ApSource() = default;
  virtual std::optional<ApReport> report_for(int epoch) = 0;
};

/// Reads `ap_epoch_{t}.json` from a directory.
class DirectoryApSource : public ApSource {
 public:
  explicit DirectoryApSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::optional<ApReport> report_for(int epoch) override;
  static std::string file_name(int epoch);

 private:
  std::filesystem::path dir_;
};

/// Reports held in memory, keyed by epoch.
class MemoryApSource : public ApSource {
 public:
  void add(ApReport report) { reports_[report.epoch] = std::move(report); }
  std::optional<ApReport> report_for(int epoch) override;

 private:
  std::map<int, ApReport> reports_;
};

struct PlanEntry {
  CategoryId class_id = 0;
  double ap = 0;
  int rank = 0;             // K for the lowest AP
  double theta = 0;         // percent
  std::int64_t basis = 0;   // images containing the class
  std::int64_t quota = 0;   // images to generate

  bool operator==(const PlanEntry&) const = default;
};

/// Entries in ascending (AP, class id) order, so rank is non-increasing.
struct AugmentationPlan {
  int k = 0;
  double p = 0;
  std::vector<PlanEntry> entries;

  std::int64_t total_quota() const;
  nlohmann::ordered_json to_json() const;
  static AugmentationPlan from_json(const nlohmann::json& j);
  bool operator==(const AugmentationPlan&) const = default;
};

/// Selects the K lowest-AP classes (ties by ascending id) and assigns
/// theta = p + (p / K) * rank, quota = round(theta / 100 * basis).
/// p = 0 yields an empty plan. Throws ConfigError unless 1 <= K <= C and p >= 0.
AugmentationPlan make_plan(const ApReport& report, int k, double p, const std::map<CategoryId, std::int64_t>& basis,
                           const std::vector<CategoryId>& classes);

struct ExecuteResult {
  std::vector<GeneratedImage> images;
  /// Requested minus produced images, for classes that fell short.
  std::map<CategoryId, std::int64_t> shortfall;
};

/// Consumes floor(quota / 2) fresh quadruples per planned class.
ExecuteResult execute_plan(const AugmentationPlan& plan, CandidateSet& cs, SwitchPlanner& planner, IdAllocator& ids);

/// Number of images containing each class (zero for absent classes).
std::map<CategoryId, std::int64_t> image_counts(const DetectionDataset& ori, std::span<const GeneratedImage> extra,
                                                const std::vector<CategoryId>& classes);

/// Epochs t in [1, t_total] with t mod T = 0.
std::vector<int> scheduled_epochs(int period, int t_total);

enum class BasisScope { kTrain, kOriginal };
enum class CountScope { kTrain, kOriginal };

struct PipelineConfig {
  MatchConfig match;
  SwitchOptions switching;
  BalanceConfig balance;
  double gamma = 1e-3;
  int k = 30;
  double p = 3.0;
  int period = 6;
  int t_total = 14;
  std::uint64_t seed = 0;
  /// Images in the equalized set; 0 means |original|.
  std::int64_t equal_target = 0;
  BasisScope basis = BasisScope::kTrain;
  CountScope counts = CountScope::kTrain;
  int jobs = 1;

  /// Throws ConfigError. `num_classes` bounds K when given.
  void validate(std::optional<std::size_t> num_classes = std::nullopt) const;
};

struct AugmentationRound {
  int epoch = 0;
  ApReport report;
  AugmentationPlan plan;
  std::vector<GeneratedImage> images;
  std::map<CategoryId, std::int64_t> shortfall;
};

enum class PipelineStatus { kComplete, kPaused };

/// The progressive training-set schedule with the detector replaced by an AP
/// report source. Owns the candidate set and all generated images.
class Pipeline {
 public:
  /// `ori` must outlive the pipeline.
  Pipeline(const DetectionDataset& ori, PipelineConfig cfg);

  /// Builds candidates, the equalized set and the balanced set.
  void init();
  void init(CandidateSet cs);

  /// Advances epochs until T_total or a missing scheduled report.
  PipelineStatus advance(ApSource& source);

  int epoch() const { return epoch_; }
  bool complete() const { return epoch_ >= cfg_.t_total; }
  const PipelineConfig& config() const { return cfg_; }
  const DetectionDataset& original() const { return ori_; }
  const CandidateSet& candidates() const { return cs_; }
  SwitchPlanner& planner() { return *planner_; }
  const std::vector<GeneratedImage>& equalized() const { return equalized_; }
  const std::vector<GeneratedImage>& uniform() const { return uniform_; }
  const std::vector<AugmentationRound>& rounds() const { return rounds_; }
  const std::vector<Move>& moves() const { return moves_; }
  const std::map<CategoryId, std::size_t>& equal_shortfall() const { return equal_shortfall_; }

  /// Synthetic part of the training set after `stage` rounds (uniform plus rounds).
  std::vector<GeneratedImage> synthetic(std::size_t stage) const;
  std::vector<GeneratedImage> synthetic() const { return synthetic(rounds_.size()); }
  /// Weights accompanying the training set after `stage` rounds.
  ClassWeightTable weight_table(std::size_t stage) const;

  nlohmann::ordered_json checkpoint(const std::string& config_hash) const;
  /// Throws ConfigError when the checkpoint was written under another config hash.
  static std::unique_ptr<Pipeline> resume(const DetectionDataset& ori, PipelineConfig cfg,
                                          const nlohmann::json& checkpoint, const std::string& config_hash);

 private:
  const DetectionDataset& ori_;
  PipelineConfig cfg_;
  std::unique_ptr<SwitchPlanner> planner_;
  CandidateSet cs_;
  IdAllocator ids_;
  std::vector<GeneratedImage> equalized_;
  std::vector<GeneratedImage> uniform_;
  std::vector<AugmentationRound> rounds_;
  std::vector<Move> moves_;
  std::map<CategoryId, std::size_t> equal_shortfall_;
  int epoch_ = 0;
  bool initialized_ = false;
};

}  // namespace psis

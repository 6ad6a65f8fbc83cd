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

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "psis/coco.hpp"

namespace psis {

/// Per-class weights w_c = gamma / (1 - (1 - gamma)^n_c).
/// Classes with n_c = 0 are kept in the table with an undefined weight.
class ClassWeightTable {
 public:
  /// Throws ConfigError unless 0 < gamma <= 1, or if a count is negative.
  ClassWeightTable(const std::map<CategoryId, std::int64_t>& counts, double gamma);

  double gamma() const { return gamma_; }
  std::int64_t count(CategoryId c) const;
  /// Throws MissingClassError for unknown classes and classes with n_c = 0.
  double weight(CategoryId c) const;
  /// Empty for n_c = 0.
  std::optional<double> try_weight(CategoryId c) const;
  std::vector<CategoryId> classes() const;

  /// `class_id,name,n_c,w_c,gamma` rows; undefined weights are written as `undefined`.
  void write_csv(const std::vector<Category>& categories, std::ostream& out) const;

 private:
  double gamma_;
  std::map<CategoryId, std::int64_t> counts_;
  std::map<CategoryId, std::optional<double>> weights_;
};

/// Stable evaluation of gamma / (1 - (1 - gamma)^n) for n >= 1.
double class_balanced_weight(std::int64_t n, double gamma);

/// Logits over C classes; `label` indexes into `logits`.
struct Prediction {
  std::span<const double> logits;
  std::size_t label = 0;
  /// Category of each logit position. Empty means position i is category i.
  std::span<const CategoryId> class_ids;
};

double cross_entropy(const Prediction& pred);
/// w_label * (-log softmax(z)_label).
double cb_loss(const Prediction& pred, const ClassWeightTable& table);
/// w_label * (softmax(z) - onehot(label)).
std::vector<double> cb_loss_gradient(const Prediction& pred, const ClassWeightTable& table);

/// Instance counts per category over a dataset, zero for categories without instances.
std::map<CategoryId, std::int64_t> instance_counts(const DetectionDataset& ds);

}  // namespace psis

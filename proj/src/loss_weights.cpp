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


#include "psis/loss_weights.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "psis/error.hpp"

namespace psis {

double class_balanced_weight(std::int64_t n, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (n < 1) throw MissingClassError("class-balanced weight needs n_c >= 1");
  if (n == 1 || gamma == 1.0) return 1.0;
  // 1 - (1 - gamma)^n = -expm1(n * log1p(-gamma))
  return gamma / -std::expm1(static_cast<double>(n) * std::log1p(-gamma));
}

ClassWeightTable::ClassWeightTable(const std::map<CategoryId, std::int64_t>& counts, double gamma)
    : gamma_(gamma), counts_(counts) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1], got " + std::to_string(gamma));
  for (const auto& [c, n] : counts_) {
    if (n < 0) throw ConfigError("negative instance count for class " + std::to_string(c));
    weights_[c] = n == 0 ? std::nullopt : std::optional<double>(class_balanced_weight(n, gamma));
  }
}

std::int64_t ClassWeightTable::count(CategoryId c) const {
  auto it = counts_.find(c);
  if (it == counts_.end()) throw MissingClassError("class " + std::to_string(c) + " not in weight table");
  return it->second;
}

std::optional<double> ClassWeightTable::try_weight(CategoryId c) const {
  auto it = weights_.find(c);
  return it == weights_.end() ? std::nullopt : it->second;
}

double ClassWeightTable::weight(CategoryId c) const {
  auto it = weights_.find(c);
  if (it == weights_.end()) throw MissingClassError("class " + std::to_string(c) + " not in weight table");
  if (!it->second) throw MissingClassError("class " + std::to_string(c) + " has no instances; weight undefined");
  return *it->second;
}

std::vector<CategoryId> ClassWeightTable::classes() const {
  std::vector<CategoryId> out;
  for (const auto& [c, _] : counts_) out.push_back(c);
  return out;
}

void ClassWeightTable::write_csv(const std::vector<Category>& categories, std::ostream& out) const {
  std::map<CategoryId, std::string> names;
  for (const auto& c : categories) names[c.id] = c.name;
  out << "class_id,name,n_c,w_c,gamma\n";
  for (const auto& [c, n] : counts_) {
    std::ostringstream line;
    line << std::setprecision(17) << c << ',' << names[c] << ',' << n << ',';
    if (const auto& w = weights_.at(c)) {
      line << *w;
    } else {
      line << "undefined";
    }
    line << ',' << gamma_;
    out << line.str() << '\n';
  }
}

namespace {

void check_prediction(const Prediction& pred) {
  if (pred.logits.empty()) throw DataError("prediction has no logits");
  if (pred.label >= pred.logits.size()) throw DataError("label outside the logit range");
  if (!pred.class_ids.empty() && pred.class_ids.size() != pred.logits.size())
    throw DataError("class id list does not match the logit count");
}

CategoryId label_class(const Prediction& pred) {
  return pred.class_ids.empty() ? static_cast<CategoryId>(pred.label) : pred.class_ids[pred.label];
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double cross_entropy(const Prediction& pred) {
  check_prediction(pred);
  return log_sum_exp(pred.logits) - pred.logits[pred.label];
}

double cb_loss(const Prediction& pred, const ClassWeightTable& table) {
  check_prediction(pred);
  return table.weight(label_class(pred)) * cross_entropy(pred);
}

std::vector<double> cb_loss_gradient(const Prediction& pred, const ClassWeightTable& table) {
  check_prediction(pred);
  const double w = table.weight(label_class(pred));
  const double lse = log_sum_exp(pred.logits);
  std::vector<double> g(pred.logits.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = w * (std::exp(pred.logits[j] - lse) - (j == pred.label ? 1.0 : 0.0));
  }
  return g;
}

std::map<CategoryId, std::int64_t> instance_counts(const DetectionDataset& ds) {
  std::map<CategoryId, std::int64_t> counts;
  for (CategoryId c : ds.category_ids()) counts[c] = 0;
  for (const auto& a : ds.annotations()) ++counts[a.category_id];
  return counts;
}

}  // namespace psis

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


#include "psis/progressive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

void ApReport::validate(const std::vector<CategoryId>& classes) const {
  const std::set<CategoryId> known(classes.begin(), classes.end());
  for (const auto& [c, v] : ap) {
    if (!known.count(c)) throw UnknownClassError("AP report names unknown class " + std::to_string(c));
    if (!(v >= 0.0 && v <= 1.0))
      throw DataError("AP for class " + std::to_string(c) + " outside [0, 1]: " + std::to_string(v));
  }
  for (CategoryId c : classes)
    if (!ap.count(c))
      throw MissingClassError("AP report for epoch " + std::to_string(epoch) + " lacks class " + std::to_string(c));
}

nlohmann::ordered_json ApReport::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["source"] = source;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [c, v] : ap) m[std::to_string(c)] = v;
  j["ap"] = std::move(m);
  return j;
}

ApReport ApReport::from_json(const nlohmann::json& j) {
  try {
    ApReport r;
    r.epoch = j.at("epoch").get<int>();
    r.source = j.value("source", std::string{});
    for (const auto& [key, v] : j.at("ap").items()) {
      std::size_t used = 0;
      const CategoryId c = std::stoll(key, &used);
      if (used != key.size()) throw DataError("bad category id in AP report: " + key);
      r.ap[c] = v.get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed AP report: ") + e.what());
  } catch (const std::logic_error&) {
    throw DataError("malformed category id in AP report");
  }
}

ApReport load_ap_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open AP report " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("AP report " + path.string() + ": " + e.what(), e.byte);
  }
  return ApReport::from_json(j);
}

void save_ap_report(const ApReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write AP report " + path.string());
  out << report.to_json().dump(1) << '\n';
}

std::string DirectoryApSource::file_name(int epoch) { return "ap_epoch_" + std::to_string(epoch) + ".json"; }

std::optional<ApReport> DirectoryApSource::report_for(int epoch) {
  const auto path = dir_ / file_name(epoch);
  if (!std::filesystem::exists(path)) return std::nullopt;
  ApReport r = load_ap_report(path);
  if (r.epoch != epoch)
    throw DataError(path.string() + " is tagged with epoch " + std::to_string(r.epoch));
  return r;
}

std::optional<ApReport> MemoryApSource::report_for(int epoch) {
  auto it = reports_.find(epoch);
  if (it == reports_.end()) return std::nullopt;
  return it->second;
}

std::int64_t AugmentationPlan::total_quota() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.quota;
  return n;
}

nlohmann::ordered_json AugmentationPlan::to_json() const {
  nlohmann::ordered_json j;
  j["K"] = k;
  j["p"] = p;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    rows.push_back({{"class_id", e.class_id}, {"ap", e.ap},       {"rank", e.rank},
                    {"theta", e.theta},       {"basis", e.basis}, {"quota", e.quota}});
  }
  j["entries"] = std::move(rows);
  return j;
}

AugmentationPlan AugmentationPlan::from_json(const nlohmann::json& j) {
  AugmentationPlan plan;
  plan.k = j.at("K").get<int>();
  plan.p = j.at("p").get<double>();
  for (const auto& e : j.at("entries")) {
    plan.entries.push_back({e.at("class_id").get<CategoryId>(), e.at("ap").get<double>(), e.at("rank").get<int>(),
                            e.at("theta").get<double>(), e.at("basis").get<std::int64_t>(),
                            e.at("quota").get<std::int64_t>()});
  }
  return plan;
}

AugmentationPlan make_plan(const ApReport& report, int k, double p, const std::map<CategoryId, std::int64_t>& basis,
                           const std::vector<CategoryId>& classes) {
  if (k < 1 || static_cast<std::size_t>(k) > classes.size())
    throw ConfigError("K must lie in [1, " + std::to_string(classes.size()) + "], got " + std::to_string(k));
  if (!(p >= 0.0)) throw ConfigError("p must be >= 0");
  report.validate(classes);

  AugmentationPlan plan;
  plan.k = k;
  plan.p = p;
  if (p == 0.0) return plan;

  std::vector<std::pair<double, CategoryId>> order;
  for (CategoryId c : classes) order.emplace_back(report.ap.at(c), c);
  std::sort(order.begin(), order.end());
  for (int i = 0; i < k; ++i) {
    const auto [ap, c] = order[static_cast<std::size_t>(i)];
    PlanEntry e;
    e.class_id = c;
    e.ap = ap;
    e.rank = k - i;
    e.theta = p + p * e.rank / k;
    auto it = basis.find(c);
    e.basis = it == basis.end() ? 0 : it->second;
    e.quota = std::llround(e.theta / 100.0 * static_cast<double>(e.basis));
    plan.entries.push_back(e);
  }
  return plan;
}

ExecuteResult execute_plan(const AugmentationPlan& plan, CandidateSet& cs, SwitchPlanner& planner, IdAllocator& ids) {
  ExecuteResult out;
  for (const auto& e : plan.entries) {
    const std::int64_t wanted_quads = e.quota / 2;
    if (e.quota % 2 != 0)
      log_event("info", "odd_quota", {{"class", std::to_string(e.class_id)}, {"quota", std::to_string(e.quota)}});
    std::int64_t used = 0;
    while (used < wanted_quads && cs.has_class(e.class_id)) {
      const auto q = cs.take(e.class_id);
      if (!q) break;
      const auto sw = planner.plan(*q);
      if (!sw) continue;
      out.images.push_back(materialize(*sw, Side::kA, planner.dataset(), ids));
      out.images.push_back(materialize(*sw, Side::kB, planner.dataset(), ids));
      ++used;
    }
    const std::int64_t missing = e.quota - 2 * used;
    if (missing > 0) {
      out.shortfall[e.class_id] = missing;
      log_event("warn", "plan_shortfall",
                {{"class", std::to_string(e.class_id)}, {"quota", std::to_string(e.quota)},
                 {"images", std::to_string(2 * used)}});
    }
  }
  return out;
}

std::map<CategoryId, std::int64_t> image_counts(const DetectionDataset& ori, std::span<const GeneratedImage> extra,
                                                const std::vector<CategoryId>& classes) {
  std::map<CategoryId, std::int64_t> counts;
  for (CategoryId c : classes) counts[c] = 0;
  for (const auto& im : ori.images()) {
    std::set<CategoryId> seen;
    for (std::size_t idx : ori.annotations_of(im.id)) seen.insert(ori.annotations()[idx].category_id);
    for (CategoryId c : seen) ++counts[c];
  }
  for (const auto& g : extra) {
    std::set<CategoryId> seen;
    for (const auto& a : g.annotations) seen.insert(a.category_id);
    for (CategoryId c : seen) ++counts[c];
  }
  return counts;
}

std::vector<int> scheduled_epochs(int period, int t_total) {
  std::vector<int> out;
  for (int t = 1; t <= t_total; ++t)
    if (t % period == 0) out.push_back(t);
  return out;
}

void PipelineConfig::validate(std::optional<std::size_t> num_classes) const {
  match.validate();
  switching.validate();
  balance.validate();
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (k < 1) throw ConfigError("K must be >= 1");
  if (num_classes && static_cast<std::size_t>(k) > *num_classes)
    throw ConfigError("K=" + std::to_string(k) + " exceeds the " + std::to_string(*num_classes) + " classes");
  if (!(p >= 0.0)) throw ConfigError("p must be >= 0");
  if (period < 1) throw ConfigError("T must be >= 1");
  if (t_total < 0) throw ConfigError("T_total must be >= 0");
  if (equal_target < 0) throw ConfigError("equal target must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(const DetectionDataset& ori, PipelineConfig cfg)
    : ori_(ori),
      cfg_(std::move(cfg)),
      planner_(std::make_unique<SwitchPlanner>(ori_, cfg_.switching)),
      ids_(ori_) {
  cfg_.validate(ori_.category_ids().size());
}

void Pipeline::init() { init(build_candidate_set(ori_, cfg_.match, cfg_.seed, cfg_.jobs)); }

void Pipeline::init(CandidateSet cs) {
  if (initialized_) throw DataError("pipeline already initialized");
  cs_ = std::move(cs);
  const auto classes = ori_.category_ids();
  const std::size_t target =
      cfg_.equal_target > 0 ? static_cast<std::size_t>(cfg_.equal_target) : ori_.images().size();

  EqualSampleResult equ = equal_sample(cs_, target, *planner_, ids_);
  equalized_ = equ.images;
  equal_shortfall_ = equ.shortfall;

  std::map<CategoryId, double> ori_shares;
  if (cfg_.balance.baseline == BaselineScope::kOriginal) {
    const auto d = distribution_stats(ori_);
    for (CategoryId c : classes) ori_shares[c] = d.share(c);
  }
  Balancer balancer(std::move(equ.images), cs_, *planner_, ids_, cfg_.balance, classes);
  balancer.run_stage1(cfg_.balance.baseline == BaselineScope::kOriginal ? &ori_shares : nullptr);
  balancer.run_stage2();
  BalanceOutcome out = balancer.outcome();
  uniform_ = std::move(out.images);
  moves_ = std::move(out.moves);
  initialized_ = true;
  log_event("info", "balanced",
            {{"equalized", std::to_string(equalized_.size())}, {"uniform", std::to_string(uniform_.size())},
             {"moves", std::to_string(moves_.size())}});
}

PipelineStatus Pipeline::advance(ApSource& source) {
  if (!initialized_) throw DataError("pipeline advanced before init");
  const auto classes = ori_.category_ids();
  while (epoch_ < cfg_.t_total) {
    const int t = epoch_ + 1;
    if (t % cfg_.period == 0) {
      auto report = source.report_for(t);
      if (!report) {
        log_event("info", "paused", {{"epoch", std::to_string(t)}});
        return PipelineStatus::kPaused;
      }
      report->validate(classes);
      const auto synth = synthetic();
      const auto basis = cfg_.basis == BasisScope::kTrain ? image_counts(ori_, synth, classes)
                                                          : image_counts(ori_, {}, classes);
      AugmentationRound round;
      round.epoch = t;
      round.plan = make_plan(*report, cfg_.k, cfg_.p, basis, classes);
      round.report = std::move(*report);
      ExecuteResult res = execute_plan(round.plan, cs_, *planner_, ids_);
      round.images = std::move(res.images);
      round.shortfall = std::move(res.shortfall);
      log_event("info", "augmentation_round",
                {{"epoch", std::to_string(t)}, {"quota", std::to_string(round.plan.total_quota())},
                 {"images", std::to_string(round.images.size())}});
      rounds_.push_back(std::move(round));
    }
    epoch_ = t;
  }
  return PipelineStatus::kComplete;
}

std::vector<GeneratedImage> Pipeline::synthetic(std::size_t stage) const {
  std::vector<GeneratedImage> out = uniform_;
  for (std::size_t r = 0; r < stage && r < rounds_.size(); ++r)
    out.insert(out.end(), rounds_[r].images.begin(), rounds_[r].images.end());
  return out;
}

ClassWeightTable Pipeline::weight_table(std::size_t stage) const {
  const auto classes = ori_.category_ids();
  std::map<CategoryId, std::int64_t> counts = instance_counts(ori_);
  if (cfg_.counts == CountScope::kTrain) {
    for (const auto& g : synthetic(stage))
      for (const auto& a : g.annotations) ++counts[a.category_id];
  }
  return ClassWeightTable(counts, cfg_.gamma);
}

namespace {

nlohmann::ordered_json images_json(const std::vector<GeneratedImage>& images) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& g : images) arr.push_back(generated_to_json(g));
  return arr;
}

std::vector<GeneratedImage> images_from(const nlohmann::json& arr) {
  std::vector<GeneratedImage> out;
  for (const auto& g : arr) out.push_back(generated_from_json(g));
  return out;
}

}  // namespace

nlohmann::ordered_json Pipeline::checkpoint(const std::string& config_hash) const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["epoch"] = epoch_;
  j["initialized"] = initialized_;
  j["ids"] = ids_.to_json();
  j["candidates"] = cs_.to_json();
  j["equalized"] = images_json(equalized_);
  nlohmann::ordered_json shortfall = nlohmann::ordered_json::object();
  for (const auto& [c, n] : equal_shortfall_) shortfall[std::to_string(c)] = n;
  j["equal_shortfall"] = std::move(shortfall);
  j["uniform"] = images_json(uniform_);
  nlohmann::ordered_json moves = nlohmann::ordered_json::array();
  for (const auto& m : moves_)
    moves.push_back({m.kind == MoveKind::kPick ? "pick" : "drop", m.image, m.class_id, m.m_c, m.m, m.m_ic, m.m_i});
  j["moves"] = std::move(moves);
  nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
  for (const auto& r : rounds_) {
    nlohmann::ordered_json rj;
    rj["epoch"] = r.epoch;
    rj["report"] = r.report.to_json();
    rj["plan"] = r.plan.to_json();
    rj["images"] = images_json(r.images);
    nlohmann::ordered_json sf = nlohmann::ordered_json::object();
    for (const auto& [c, n] : r.shortfall) sf[std::to_string(c)] = n;
    rj["shortfall"] = std::move(sf);
    rounds.push_back(std::move(rj));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

std::unique_ptr<Pipeline> Pipeline::resume(const DetectionDataset& ori, PipelineConfig cfg, const nlohmann::json& j,
                                           const std::string& config_hash) {
  const auto stored = j.at("config_hash").get<std::string>();
  if (stored != config_hash)
    throw ConfigError("checkpoint was written with config " + stored + ", current config is " + config_hash);
  auto p = std::make_unique<Pipeline>(ori, std::move(cfg));
  try {
    p->epoch_ = j.at("epoch").get<int>();
    p->initialized_ = j.at("initialized").get<bool>();
    p->ids_ = IdAllocator::from_json(j.at("ids"));
    p->cs_ = CandidateSet::from_json(j.at("candidates"));
    p->equalized_ = images_from(j.at("equalized"));
    for (const auto& [key, n] : j.at("equal_shortfall").items()) p->equal_shortfall_[std::stoll(key)] = n.get<std::size_t>();
    p->uniform_ = images_from(j.at("uniform"));
    for (const auto& m : j.at("moves")) {
      p->moves_.push_back({m.at(0).get<std::string>() == "pick" ? MoveKind::kPick : MoveKind::kDrop,
                           m.at(1).get<ImageId>(), m.at(2).get<CategoryId>(), m.at(3).get<std::int64_t>(),
                           m.at(4).get<std::int64_t>(), m.at(5).get<std::int64_t>(), m.at(6).get<std::int64_t>()});
    }
    for (const auto& rj : j.at("rounds")) {
      AugmentationRound r;
      r.epoch = rj.at("epoch").get<int>();
      r.report = ApReport::from_json(rj.at("report"));
      r.plan = AugmentationPlan::from_json(rj.at("plan"));
      r.images = images_from(rj.at("images"));
      for (const auto& [key, n] : rj.at("shortfall").items()) r.shortfall[std::stoll(key)] = n.get<std::int64_t>();
      p->rounds_.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace psis

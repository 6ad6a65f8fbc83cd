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

#include "psis/balancing.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

using i128 = __int128;

namespace {

/// a/b > c/d for positive denominators.
bool ratio_greater(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  return static_cast<i128>(a) * d > static_cast<i128>(c) * b;
}

ImageProfile profile_from_categories(ImageId image, const std::vector<Annotation>& anns) {
  return profile_of(image, anns);
}

}  // namespace

ImageProfile profile_of(ImageId image, std::span<const Annotation> annotations) {
  ImageProfile p;
  p.image = image;
  for (const auto& a : annotations) {
    ++p.counts[a.category_id];
    ++p.total;
  }
  return p;
}

ImageProfile profile_of(const GeneratedImage& img) { return profile_of(img.record.id, img.annotations); }

InstanceDistribution::InstanceDistribution(const std::vector<CategoryId>& classes) {
  for (CategoryId c : classes) counts_[c] = 0;
}

void InstanceDistribution::add(const ImageProfile& p) {
  for (const auto& [c, n] : p.counts) counts_[c] += n;
  total_ += p.total;
}

void InstanceDistribution::remove(const ImageProfile& p) {
  for (const auto& [c, n] : p.counts) {
    auto& slot = counts_[c];
    if (slot < n) throw DegenerateDistributionError("removing more instances than present");
    slot -= n;
  }
  if (total_ < p.total) throw DegenerateDistributionError("removing more instances than present");
  total_ -= p.total;
}

std::int64_t InstanceDistribution::count(CategoryId c) const {
  auto it = counts_.find(c);
  return it == counts_.end() ? 0 : it->second;
}

double InstanceDistribution::share(CategoryId c) const {
  return total_ == 0 ? 0.0 : static_cast<double>(count(c)) / static_cast<double>(total_);
}

InstanceDistribution distribution_stats(const DetectionDataset& ds) {
  InstanceDistribution d(ds.category_ids());
  for (const auto& im : ds.images()) {
    std::vector<Annotation> anns;
    for (std::size_t idx : ds.annotations_of(im.id)) anns.push_back(ds.annotations()[idx]);
    d.add(profile_of(im.id, anns));
  }
  return d;
}

InstanceDistribution distribution_of(std::span<const GeneratedImage> images, const std::vector<CategoryId>& classes) {
  InstanceDistribution d(classes);
  for (const auto& g : images) d.add(profile_of(g));
  return d;
}

double normalized_entropy(const InstanceDistribution& dist) {
  const std::size_t c = dist.counts().size();
  if (dist.total() == 0) return 0.0;
  if (c <= 1) return 1.0;
  double h = 0;
  for (const auto& [_, n] : dist.counts()) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / static_cast<double>(dist.total());
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(c));
}

void write_histogram_csv(const InstanceDistribution& dist, const std::vector<Category>& categories, std::ostream& out) {
  std::map<CategoryId, std::string> names;
  for (const auto& c : categories) names[c.id] = c.name;
  out << "class_id,name,count,share\n";
  for (const auto& [c, n] : dist.counts()) {
    std::ostringstream share;
    share << std::setprecision(10) << dist.share(c);
    out << c << ',' << names[c] << ',' << n << ',' << share.str() << '\n';
  }
}

bool drop_pick_condition(std::int64_t m_c, std::int64_t m, std::int64_t m_ic, std::int64_t m_i) {
  if (m <= 0 || m_i <= 0 || m_i >= m || m_ic < 0 || m_ic > m_i || m_c < 0 || m_c > m)
    throw DegenerateDistributionError("drop-pick condition needs 0 <= M_Ic <= M_I < M and 0 <= M_c <= M (got M_c=" +
                                      std::to_string(m_c) + " M=" + std::to_string(m) + " M_Ic=" +
                                      std::to_string(m_ic) + " M_I=" + std::to_string(m_i) + ")");
  // Denominators M, M - M_I and M + M_I are all positive, so cross-multiply.
  const bool left = static_cast<i128>(m_c - m_ic) * m < static_cast<i128>(m_c) * (m - m_i);
  const bool right = static_cast<i128>(m_c) * (m + m_i) < static_cast<i128>(m_c + m_ic) * m;
  return left && right;
}

bool drop_pick_condition(const InstanceDistribution& dist, const ImageProfile& profile, CategoryId class_id) {
  return drop_pick_condition(dist.count(class_id), dist.total(), profile.count(class_id), profile.total);
}

namespace {

bool condition_holds(const InstanceDistribution& dist, const ImageProfile& profile, CategoryId c) {
  try {
    return drop_pick_condition(dist, profile, c);
  } catch (const DegenerateDistributionError&) {
    return false;
  }
}

}  // namespace

EqualSampleResult equal_sample(CandidateSet& cs, std::size_t target_total_images, SwitchPlanner& planner,
                               IdAllocator& ids) {
  if (cs.total_remaining() == 0) throw NothingToSampleError("candidate set has no unused quadruples");
  const auto classes = cs.classes();
  const std::size_t per_class = target_total_images / (2 * classes.size());
  EqualSampleResult out;
  for (CategoryId c : classes) {
    std::size_t used = 0;
    while (used < per_class) {
      const auto q = cs.take(c);
      if (!q) break;
      const auto plan = planner.plan(*q);
      if (!plan) continue;
      out.images.push_back(materialize(*plan, Side::kA, planner.dataset(), ids));
      out.images.push_back(materialize(*plan, Side::kB, planner.dataset(), ids));
      ++used;
    }
    out.quadruples_used[c] = used;
    if (used < per_class) {
      out.shortfall[c] = per_class - used;
      log_event("warn", "equal_sample_shortfall",
                {{"class", std::to_string(c)}, {"wanted", std::to_string(per_class)}, {"got", std::to_string(used)}});
    }
  }
  return out;
}

void BalanceConfig::validate() const {
  if (stage1_iterations < 1) throw ConfigError("stage-1 iterations must be >= 1");
  if (!(min_growth > 1.0 && max_shrink < 1.0 && max_shrink > 0.0))
    throw ConfigError("balance factors must satisfy min_growth > 1 > max_shrink > 0");
  if (!(stage2_tolerance >= 0)) throw ConfigError("stage-2 tolerance must be >= 0");
}

void write_move_log(std::span<const Move> moves, std::ostream& out) {
  for (const auto& m : moves) {
    out << (m.kind == MoveKind::kPick ? "pick" : "drop") << ',' << m.image << ',' << m.class_id << ',' << m.m_c << ','
        << m.m << ',' << m.m_ic << ',' << m.m_i << '\n';
  }
}

std::vector<Move> read_move_log(std::istream& in) {
  std::vector<Move> moves;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    std::getline(ss, kind, ',');
    Move m;
    if (kind == "pick") {
      m.kind = MoveKind::kPick;
    } else if (kind == "drop") {
      m.kind = MoveKind::kDrop;
    } else {
      throw ParseError("bad move kind on line " + std::to_string(lineno), 0);
    }
    char comma = 0;
    ss >> m.image >> comma >> m.class_id >> comma >> m.m_c >> comma >> m.m >> comma >> m.m_ic >> comma >> m.m_i;
    if (!ss) throw ParseError("malformed move on line " + std::to_string(lineno), 0);
    moves.push_back(m);
  }
  return moves;
}

// ---------------------------------------------------------------------------
// Balancer

Balancer::Balancer(std::vector<GeneratedImage> working_set, CandidateSet& cs, SwitchPlanner& planner, IdAllocator& ids,
                   BalanceConfig cfg, std::vector<CategoryId> classes)
    : cs_(cs), planner_(planner), ids_(ids), cfg_(cfg), classes_(std::move(classes)), dist_(classes_) {
  cfg_.validate();
  for (auto& g : working_set) {
    Member m{std::move(g), {}, true};
    m.profile = profile_of(m.image);
    dist_.add(m.profile);
    members_.push_back(std::move(m));
  }
  for (CategoryId c : classes_) entry_shares_[c] = dist_.share(c);
}

std::vector<Balancer::PoolItem>& Balancer::pool(CategoryId c) {
  auto it = pools_.find(c);
  if (it != pools_.end()) return it->second;
  std::vector<PoolItem> items;
  if (cs_.has_class(c)) {
    for (const Quadruple& q : cs_.available(c)) {
      auto plan = planner_.plan(q);
      if (!plan) continue;
      for (Side side : {Side::kA, Side::kB}) {
        const auto anns = side_annotations(plan->side(side == Side::kA), planner_.dataset());
        items.push_back({q, side, plan, profile_from_categories(0, anns), false});
      }
    }
  }
  return pools_.emplace(c, std::move(items)).first->second;
}

std::optional<std::size_t> Balancer::best_pick(CategoryId c, const InstanceDistribution& dist) {
  auto& items = pool(c);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const PoolItem& it = items[i];
    if (it.used) continue;
    // A sibling may have been consumed elsewhere; only its own side is usable.
    if (cs_.is_consumed(it.quad.id)) {
      const bool sibling_taken_here = std::any_of(items.begin(), items.end(), [&](const PoolItem& o) {
        return o.used && o.quad.id == it.quad.id;
      });
      if (!sibling_taken_here) continue;
    }
    if (!condition_holds(dist, it.profile, c)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const PoolItem& b = items[*best];
    // Ties keep the earlier item: lower quadruple id, side A first.
    if (ratio_greater(it.profile.count(c), it.profile.total, b.profile.count(c), b.profile.total)) best = i;
  }
  return best;
}

std::optional<std::size_t> Balancer::best_drop(CategoryId c, const InstanceDistribution& dist) const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const Member& m = members_[i];
    if (!m.alive || !condition_holds(dist, m.profile, c)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const Member& b = members_[*best];
    const std::int64_t a_n = m.profile.count(c), b_n = b.profile.count(c);
    if (ratio_greater(a_n, m.profile.total, b_n, b.profile.total) ||
        (!ratio_greater(b_n, b.profile.total, a_n, m.profile.total) && m.image.record.id < b.image.record.id))
      best = i;
  }
  return best;
}

template <typename Accept>
bool Balancer::try_pair(CategoryId pick_class, CategoryId drop_class, Accept&& accept) {
  const auto pick = best_pick(pick_class, dist_);
  if (!pick) return false;
  PoolItem& item = pools_.at(pick_class)[*pick];
  InstanceDistribution after_pick = dist_;
  after_pick.add(item.profile);
  const auto drop = best_drop(drop_class, after_pick);
  if (!drop) return false;
  InstanceDistribution after_drop = after_pick;
  after_drop.remove(members_[*drop].profile);
  if (!locks_hold(after_drop) || !accept(after_drop)) return false;

  GeneratedImage g = materialize(*item.plan, item.side, planner_.dataset(), ids_);
  moves_.push_back({MoveKind::kPick, g.record.id, pick_class, dist_.count(pick_class), dist_.total(),
                    item.profile.count(pick_class), item.profile.total});
  item.used = true;
  cs_.consume(item.quad.id);
  picked_.push_back(g);
  Member added{std::move(g), {}, true};
  added.profile = profile_of(added.image);
  dist_.add(added.profile);

  Member& victim = members_[*drop];
  moves_.push_back({MoveKind::kDrop, victim.image.record.id, drop_class, dist_.count(drop_class), dist_.total(),
                    victim.profile.count(drop_class), victim.profile.total});
  victim.alive = false;
  dist_.remove(victim.profile);
  members_.push_back(std::move(added));
  return true;
}

std::vector<CategoryId> Balancer::present_classes() const {
  std::vector<CategoryId> out;
  for (CategoryId c : classes_)
    if (dist_.count(c) > 0) out.push_back(c);
  return out;
}

bool Balancer::locks_hold(const InstanceDistribution& d) const {
  for (const auto& [c, v] : floors_)
    if (d.share(c) < v) return false;
  for (const auto& [c, v] : ceilings_)
    if (d.share(c) > v) return false;
  return true;
}

void Balancer::update_locks(CategoryId cmin, double min_target, CategoryId cmax, double max_target) {
  if (dist_.share(cmin) >= min_target) floors_[cmin] = std::max(floors_[cmin], min_target);
  if (dist_.share(cmax) <= max_target) {
    auto it = ceilings_.find(cmax);
    ceilings_[cmax] = it == ceilings_.end() ? max_target : std::min(it->second, max_target);
  }
}

void Balancer::run_stage1(const std::map<CategoryId, double>* baseline) {
  const std::map<CategoryId, double>& base = baseline ? *baseline : entry_shares_;
  auto base_of = [&](CategoryId c) {
    auto it = base.find(c);
    return it == base.end() ? 0.0 : it->second;
  };
  for (int iter = 0; iter < cfg_.stage1_iterations; ++iter) {
    const auto present = present_classes();
    if (present.size() < 2) return;
    CategoryId cmin = present.front(), cmax = present.front();
    for (CategoryId c : present) {
      if (dist_.share(c) < dist_.share(cmin)) cmin = c;
      if (dist_.share(c) > dist_.share(cmax)) cmax = c;
    }
    if (cmin == cmax) return;
    const double min_target = cfg_.min_growth * base_of(cmin);
    const double max_target = cfg_.max_shrink * base_of(cmax);
    std::size_t committed = 0;
    while (!(dist_.share(cmin) >= min_target && dist_.share(cmax) <= max_target)) {
      update_locks(cmin, min_target, cmax, max_target);
      if (!try_pair(cmin, cmax, [](const InstanceDistribution&) { return true; })) {
        ++exhausted_;
        log_event("info", "stage1_exhausted",
                  {{"iteration", std::to_string(iter + 1)}, {"min_class", std::to_string(cmin)},
                   {"max_class", std::to_string(cmax)}, {"pairs", std::to_string(committed)}});
        break;
      }
      ++committed;
    }
    update_locks(cmin, min_target, cmax, max_target);
  }
}

void Balancer::run_stage2() {
  const auto present = present_classes();
  if (present.size() < 2) return;
  const double target = 1.0 / static_cast<double>(present.size());
  const double tol = cfg_.stage2_tolerance * target;
  auto deviation = [&](const InstanceDistribution& d, CategoryId c) { return std::abs(d.share(c) - target); };

  std::vector<CategoryId> order = present;
  std::stable_sort(order.begin(), order.end(),
                   [&](CategoryId x, CategoryId y) { return deviation(dist_, x) > deviation(dist_, y); });

  for (CategoryId c : order) {
    while (deviation(dist_, c) > tol) {
      const double before = deviation(dist_, c);
      auto improves = [&](const InstanceDistribution& d) { return deviation(d, c) < before; };
      const bool too_large = dist_.share(c) > target;
      // Partners ordered from the most extreme opposite share inward.
      std::vector<CategoryId> partners;
      for (CategoryId p : present)
        if (p != c) partners.push_back(p);
      std::stable_sort(partners.begin(), partners.end(), [&](CategoryId x, CategoryId y) {
        return too_large ? dist_.share(x) < dist_.share(y) : dist_.share(x) > dist_.share(y);
      });
      bool moved = false;
      for (CategoryId p : partners) {
        moved = too_large ? try_pair(p, c, improves) : try_pair(c, p, improves);
        if (moved) break;
      }
      if (!moved) {
        log_event("info", "stage2_exhausted",
                  {{"class", std::to_string(c)}, {"share", std::to_string(dist_.share(c))}});
        break;
      }
    }
  }
}

BalanceOutcome Balancer::outcome() const {
  BalanceOutcome out;
  for (const auto& m : members_)
    if (m.alive) out.images.push_back(m.image);
  out.moves = moves_;
  out.picked = picked_;
  out.exhausted_iterations = exhausted_;
  return out;
}

BalanceOutcome balance_stage1(std::vector<GeneratedImage> equalized, CandidateSet& cs, const BalanceConfig& cfg,
                              SwitchPlanner& planner, IdAllocator& ids, const std::vector<CategoryId>& classes,
                              const std::map<CategoryId, double>* baseline) {
  Balancer b(std::move(equalized), cs, planner, ids, cfg, classes);
  b.run_stage1(baseline);
  return b.outcome();
}

BalanceOutcome balance_stage2(std::vector<GeneratedImage> intermediate, CandidateSet& cs, const BalanceConfig& cfg,
                              SwitchPlanner& planner, IdAllocator& ids, const std::vector<CategoryId>& classes) {
  Balancer b(std::move(intermediate), cs, planner, ids, cfg, classes);
  b.run_stage2();
  return b.outcome();
}

}  // namespace psis

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


// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Tolerances and time limits are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "psis/balancing.hpp"
#include "psis/commands.hpp"
#include "psis/compositor.hpp"
#include "psis/error.hpp"
#include "psis/loss_weights.hpp"
#include "psis/matching.hpp"
#include "psis/progressive.hpp"
#include "psis/util.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace psis;
namespace fs = std::filesystem;

constexpr double kShapeEpsilon = 0.3;
constexpr double kSoundBboxPx = 1.0;
constexpr double kSoundAreaRel = 0.02;
constexpr double kCrossEntropyTol = 1e-12;
constexpr double kGradientTol = 1e-6;
constexpr double kFiniteDiffStep = 1e-5;
constexpr double kThetaTol = 1e-12;
constexpr double kLimitCandidatesSec = 10;
constexpr double kLimitCompositorSec = 60;
constexpr double kLimitBalancingSec = 120;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::map<CategoryId, int> category_multiset(const DetectionDataset& ds, ImageId a, ImageId b) {
  std::map<CategoryId, int> m;
  for (ImageId id : {a, b})
    for (std::size_t idx : ds.annotations_of(id)) ++m[ds.annotations()[idx].category_id];
  return m;
}

std::map<CategoryId, int> category_multiset(const std::vector<Annotation>& x, const std::vector<Annotation>& y) {
  std::map<CategoryId, int> m;
  for (const auto* v : {&x, &y})
    for (const auto& a : *v) ++m[a.category_id];
  return m;
}

std::vector<Quadruple> all_quadruples(const CandidateSet& cs) {
  std::vector<Quadruple> out;
  for (CategoryId c : cs.classes())
    for (const auto& q : cs.all(c)) out.push_back(q);
  return out;
}

Verdict constraint_soundness() {
  Verdict v;
  const auto fx = testing::random_fixture(
      {.images = 90, .classes = 3, .min_instances = 1, .max_instances = 4, .overlap_rate = 0.2, .seed = 21});
  const std::size_t n_inst = fx.ds.annotations().size();
  v.require(n_inst >= 200, "fixture has only " + std::to_string(n_inst) + " instances");

  const auto t0 = Clock::now();
  const CandidateSet cs = build_candidate_set(fx.ds, MatchConfig{}, 7);
  const double build_sec = seconds_since(t0);

  std::size_t checked = 0;
  for (const Quadruple& q : all_quadruples(cs)) {
    const Annotation& a = fx.ds.annotation(q.inst_a);
    const Annotation& b = fx.ds.annotation(q.inst_b);
    const BinaryMask ma = rasterize_mask(a, fx.ds.image(a.image_id));
    const BinaryMask mb = rasterize_mask(b, fx.ds.image(b.image_id));
    const std::int64_t pa = ma.popcount(), pb = mb.popcount();
    v.require(a.category_id == q.class_id && b.category_id == q.class_id, "class mismatch in quad " + std::to_string(q.id));
    v.require(a.image_id == q.image_a && b.image_id == q.image_b && q.image_a != q.image_b,
              "image mismatch in quad " + std::to_string(q.id));
    v.require(testing::naive_shape(ma, mb, MatchConfig{}.normalized_size) < kShapeEpsilon,
              "shape constraint fails for quad " + std::to_string(q.id));
    v.require(3 * pb > pa && pb < 3 * pa, "scale constraint fails for quad " + std::to_string(q.id));
    ++checked;
  }
  v.require(checked > 0, "no quadruples built");

  std::size_t oracle_pairs = 0;
  for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
    const auto small = testing::random_fixture(
        {.images = 14, .classes = 2, .min_instances = 1, .max_instances = 3, .overlap_rate = 0.2, .seed = seed});
    v.require(small.ds.annotations().size() <= 40, "oracle fixture too large");
    for (CategoryId c : small.ds.category_ids()) {
      std::set<testing::PairKey> got;
      for (const auto& p : accepted_pairs(small.ds, MatchConfig{}, c)) got.insert({p.inst_a, p.inst_b});
      const auto expected = testing::brute_force_pairs(small.ds, c, MatchConfig{}.normalized_size);
      v.require(got == expected, "brute-force oracle disagrees, seed " + std::to_string(seed));
      oracle_pairs += expected.size();
    }
  }
  v.require(build_sec < kLimitCandidatesSec, "candidate build took " + std::to_string(build_sec) + " s");
  if (v.pass) {
    std::ostringstream s;
    s << n_inst << " instances, " << checked << " quadruples re-verified, " << oracle_pairs
      << " oracle pairs matched, build " << std::fixed << std::setprecision(2) << build_sec << " s";
    v.detail = s.str();
  }
  return v;
}

Verdict compositor_locality() {
  Verdict v;
  const auto t0 = Clock::now();
  const SwitchOptions opts;
  int switches = 0, annotations = 0;
  for (std::uint64_t seed = 17; switches < 50 && seed < 40; ++seed) {
    const auto fx = testing::random_fixture(
        {.images = 30, .classes = 3, .min_instances = 1, .max_instances = 4, .overlap_rate = 0.3, .seed = seed});
    const CandidateSet cs = build_candidate_set(fx.ds, MatchConfig{}, seed);
    for (const Quadruple& q : all_quadruples(cs)) {
      if (switches == 50) break;
      SwitchResult r;
      try {
        r = switch_instances(q, fx.ds, fx.source, opts, seed * 1000 + static_cast<std::uint64_t>(q.id));
      } catch (const DegenerateSwitchError&) {
        continue;
      }
      ++switches;
      for (bool is_a : {true, false}) {
        const SwitchSide& side = r.plan.side(is_a);
        const ImageRecord& im = fx.ds.image(side.base_image);
        BinaryMask edit(im.width, im.height);
        for (AnnotationId id : side.outgoing) edit |= rasterize_mask(fx.ds.annotation(id), im);
        for (const auto& a : side.incoming) edit |= rasterize_mask(a, im);
        const BinaryMask allowed = dilate(edit, opts.blur.band_width);
        const Raster& out = is_a ? r.image_a_out : r.image_b_out;
        const Raster& base = fx.rasters.at(side.base_image);
        bool local = true;
        for (int y = 0; y < base.height() && local; ++y)
          for (int x = 0; x < base.width() && local; ++x)
            if (!allowed.at(x, y) && !(out.at(x, y) == base.at(x, y))) local = false;
        v.require(local, "pixel outside edit region changed, quad " + std::to_string(q.id));
        for (const auto& a : is_a ? r.annotations_a_out : r.annotations_b_out) {
          v.require(annotation_is_sound(a, im, kSoundBboxPx, kSoundAreaRel),
                    "unsound annotation " + std::to_string(a.id) + " in quad " + std::to_string(q.id));
          ++annotations;
        }
      }
    }
  }
  const double sec = seconds_since(t0);
  v.require(switches == 50, "only " + std::to_string(switches) + " non-degenerate switches found");
  v.require(sec < kLimitCompositorSec, "took " + std::to_string(sec) + " s");
  if (v.pass) {
    std::ostringstream s;
    s << switches << " switches, " << annotations << " annotations sound, " << std::fixed << std::setprecision(2)
      << sec << " s";
    v.detail = s.str();
  }
  return v;
}

Verdict class_conservation() {
  Verdict v;
  std::vector<testing::Fixture> fixtures;
  for (std::uint64_t seed : {17u, 21u, 22u})
    fixtures.push_back(testing::random_fixture(
        {.images = 30, .classes = 3, .min_instances = 1, .max_instances = 4, .overlap_rate = 0.3, .seed = seed}));
  fixtures.push_back(testing::skewed_fixture({10, 4, 3, 2, 1}, 12, 3));
  std::size_t pairs = 0, degenerate = 0;
  for (const auto& fx : fixtures) {
    const CandidateSet cs = build_candidate_set(fx.ds, MatchConfig{}, 1);
    for (const Quadruple& q : all_quadruples(cs)) {
      SwitchPlan plan;
      try {
        plan = plan_switch(q, fx.ds, SwitchOptions{});
      } catch (const DegenerateSwitchError&) {
        ++degenerate;
        continue;
      }
      const auto after = category_multiset(side_annotations(plan.a, fx.ds), side_annotations(plan.b, fx.ds));
      v.require(after == category_multiset(fx.ds, q.image_a, q.image_b),
                "category multiset changed, quad " + std::to_string(q.id));
      ++pairs;
    }
  }
  v.require(pairs > 0, "no switches checked");
  if (v.pass)
    v.detail = std::to_string(pairs) + " image pairs over " + std::to_string(fixtures.size()) +
               " fixtures (" + std::to_string(degenerate) + " degenerate skipped)";
  return v;
}

Verdict drop_pick_oracle() {
  Verdict v;
  std::mt19937_64 gen(20260101);
  int agree_true = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t scale = i % 3 == 0 ? 12 : (i % 3 == 1 ? 5000 : 4'000'000'000'000ull);
    const std::int64_t m = 2 + static_cast<std::int64_t>(gen() % scale);
    const std::int64_t mi = 1 + static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(m - 1));
    const std::int64_t mic = static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(mi + 1));
    const std::int64_t mc = static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(m + 1));
    const bool got = drop_pick_condition(mc, m, mic, mi);
    const bool want = testing::rational_drop_pick(mc, m, mic, mi);
    std::ostringstream s;
    s << "tuple (" << mc << ", " << m << ", " << mic << ", " << mi << ")";
    v.require(got == want, s.str());
    agree_true += want;
  }
  if (v.pass) v.detail = "10000 tuples agree (" + std::to_string(agree_true) + " satisfy the inequality)";
  return v;
}

Verdict balancing_effectiveness() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto fx = testing::skewed_fixture({10, 4, 3, 2, 1}, 80, 3);
  const auto classes = fx.ds.category_ids();
  const InstanceDistribution ori = distribution_stats(fx.ds);
  const std::vector<double> shares{0.5, 0.2, 0.15, 0.1, 0.05};
  for (std::size_t i = 0; i < shares.size(); ++i)
    v.require(std::abs(ori.share(classes[i]) - shares[i]) < 1e-12, "fixture shares are off");

  PipelineConfig cfg;
  cfg.seed = 5;
  cfg.period = 6;
  cfg.t_total = 5;
  cfg.k = 5;
  cfg.equal_target = 40;
  Pipeline pipe(fx.ds, cfg);
  pipe.init();
  const InstanceDistribution equ = distribution_of(pipe.equalized(), classes);
  const InstanceDistribution uni = distribution_of(pipe.uniform(), classes);
  const double h_equ = normalized_entropy(equ), h_uni = normalized_entropy(uni);
  const CategoryId cmin = classes.back(), cmax = classes.front();
  v.require(h_uni > h_equ, "entropy did not increase");
  v.require(uni.share(cmin) >= 1.5 * equ.share(cmin), "minimum class share below 1.5x baseline");
  v.require(uni.share(cmax) <= 0.5 * equ.share(cmax), "maximum class share above 0.5x baseline");
  v.require(pipe.uniform().size() == pipe.equalized().size(), "set size changed");
  const double sec = seconds_since(t0);
  v.require(sec < kLimitBalancingSec, "took " + std::to_string(sec) + " s");
  if (v.pass) {
    std::ostringstream s;
    s << std::setprecision(4) << "entropy " << h_equ << " -> " << h_uni << ", min share " << equ.share(cmin)
      << " -> " << uni.share(cmin) << ", max share " << equ.share(cmax) << " -> " << uni.share(cmax) << ", |set| "
      << pipe.uniform().size() << ", " << std::fixed << std::setprecision(2) << sec << " s";
    v.detail = s.str();
  }
  return v;
}

Verdict class_balanced_loss() {
  Verdict v;
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> logit(-4.0, 4.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_ce = 0, worst_grad = 0;
  for (double g : {1e-3, 0.1, 0.5, 0.999, 1.0})
    v.require(class_balanced_weight(1, g) == 1.0, "n_c = 1 weight is not exactly 1");
  for (int f = 0; f < 100; ++f) {
    const int c = 2 + static_cast<int>(gen() % 9);
    std::vector<double> z(static_cast<std::size_t>(c));
    std::map<CategoryId, std::int64_t> counts;
    for (int i = 0; i < c; ++i) {
      z[static_cast<std::size_t>(i)] = logit(gen);
      counts[i] = 1 + static_cast<std::int64_t>(gen() % 5000);
    }
    const std::size_t label = gen() % static_cast<std::size_t>(c);
    const ClassWeightTable plain(counts, 1.0);
    const ClassWeightTable table(counts, std::max(1e-4, unit(gen)));

    worst_ce = std::max(worst_ce, std::abs(cb_loss({z, label, {}}, plain) - cross_entropy({z, label, {}})));

    const auto grad = cb_loss_gradient({z, label, {}}, table);
    for (int i = 0; i < c; ++i) {
      auto zp = z, zm = z;
      zp[static_cast<std::size_t>(i)] += kFiniteDiffStep;
      zm[static_cast<std::size_t>(i)] -= kFiniteDiffStep;
      const double fd = (cb_loss({zp, label, {}}, table) - cb_loss({zm, label, {}}, table)) / (2 * kFiniteDiffStep);
      worst_grad = std::max(worst_grad, std::abs(fd - grad[static_cast<std::size_t>(i)]));
    }
  }
  v.require(worst_ce <= kCrossEntropyTol, "gamma = 1 differs from cross-entropy by " + std::to_string(worst_ce));
  v.require(worst_grad <= kGradientTol, "gradient error " + std::to_string(worst_grad));
  if (v.pass) {
    std::ostringstream s;
    s << "max |cb - ce| " << worst_ce << ", max gradient error " << worst_grad << " over 100 fixtures";
    v.detail = s.str();
  }
  return v;
}

Verdict progressive_plan() {
  Verdict v;
  std::vector<CategoryId> classes;
  ApReport report{6, "acceptance", {}};
  std::map<CategoryId, std::int64_t> basis;
  std::mt19937_64 gen(9);
  std::vector<int> aps(1000);
  for (int i = 0; i < 1000; ++i) aps[static_cast<std::size_t>(i)] = i;
  std::shuffle(aps.begin(), aps.end(), gen);
  for (CategoryId c = 1; c <= 45; ++c) {
    classes.push_back(c);
    report.ap[c] = aps[static_cast<std::size_t>(c)] / 1000.0;
    basis[c] = 2000;
  }
  const AugmentationPlan plan = make_plan(report, 30, 3.0, basis, classes);
  v.require(plan.entries.size() == 30, "plan does not hold K classes");
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    lo = std::min(lo, plan.entries[i].theta);
    hi = std::max(hi, plan.entries[i].theta);
    if (i > 0) {
      v.require(plan.entries[i].ap > plan.entries[i - 1].ap, "entries not in ascending AP");
      v.require(plan.entries[i].theta < plan.entries[i - 1].theta, "theta not strictly decreasing in AP");
    }
  }
  v.require(std::abs(lo - 3.1) <= kThetaTol && std::abs(hi - 6.0) <= kThetaTol, "theta range is off");

  // Round count from an actual pipeline run with a report for every epoch.
  const auto fx = testing::skewed_fixture({3, 2, 1}, 24, 4);
  PipelineConfig cfg;
  cfg.k = 2;
  cfg.p = 3.0;
  cfg.period = 6;
  cfg.t_total = 14;
  cfg.equal_target = 12;
  MemoryApSource source;
  for (int t = 1; t <= 14; ++t) source.add({t, "acceptance", {{1, 0.6}, {2, 0.4}, {3, 0.2}}});
  Pipeline pipe(fx.ds, cfg);
  pipe.init();
  v.require(pipe.advance(source) == PipelineStatus::kComplete, "pipeline did not complete");
  std::vector<int> fired;
  for (const auto& r : pipe.rounds()) fired.push_back(r.epoch);
  v.require(fired == std::vector<int>{6, 12}, "rounds fired at " + std::to_string(fired.size()) + " epochs");
  if (v.pass) {
    std::ostringstream s;
    s << std::setprecision(6) << "theta in [" << lo << ", " << hi << "], strictly decreasing; rounds at t = 6, 12";
    v.detail = s.str();
  }
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  return out;
}

struct ToyRun {
  fs::path root;

  ToyRun() : root(fs::temp_directory_path() / "psis_acceptance") {
    fs::remove_all(root);
    testing::random_fixture({.images = 36, .classes = 3, .min_instances = 1, .max_instances = 4,
                             .overlap_rate = 0.2, .seed = 44})
        .write(root / "data");
    fs::create_directories(root / "ap");
    for (int t : {2, 4})
      save_ap_report({t, "stub", {{1, 0.5}, {2, 0.3}, {3, 0.1}}}, root / "ap" / DirectoryApSource::file_name(t));
  }
  ~ToyRun() { fs::remove_all(root); }

  fs::path run(const std::string& name, int jobs) const {
    RunConfig cfg;
    cfg.set("annotations", (root / "data" / "annotations.json").string());
    cfg.set("images", (root / "data" / "images").string());
    cfg.set("out", (root / name).string());
    cfg.set("ap_dir", (root / "ap").string());
    cfg.set("K", "2");
    cfg.set("p", "10");
    cfg.set("T", "2");
    cfg.set("T_total", "5");
    cfg.set("seed", "2026");
    cfg.set("equal_target", "18");
    cfg.set("jobs", std::to_string(jobs));
    std::ostringstream sink;
    if (run_pipeline(cfg, false, sink) != "complete") throw std::runtime_error("toy pipeline paused");
    return root / name;
  }
};

std::size_t image_count(const fs::path& file) {
  return nlohmann::json::parse(slurp(file)).at("images").size();
}

Verdict accounting_identity(const fs::path& out) {
  Verdict v;
  const std::size_t ori = image_count(out.parent_path() / "data" / "annotations.json");
  const std::size_t uni = image_count(out / "omega_uni.json");
  std::size_t aug = 0;
  int rounds = 0;
  for (int r = 1; fs::exists(out / ("omega_aug_r" + std::to_string(r) + ".json")); ++r, ++rounds)
    aug += image_count(out / ("omega_aug_r" + std::to_string(r) + ".json"));
  const std::size_t psis = image_count(out / "omega_psis.json");
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  v.require(rounds == 2, "expected 2 augmentation rounds, found " + std::to_string(rounds));
  v.require(aug > 0, "augmentation rounds produced nothing");
  v.require(psis == ori + uni + aug, "identity broken");
  v.require(manifest.at("counts").at("psis").get<std::size_t>() == psis, "manifest disagrees with omega_psis.json");
  if (v.pass) {
    std::ostringstream s;
    s << psis << " = " << ori << " + " << uni << " + " << aug << " (" << rounds << " rounds)";
    v.detail = s.str();
  }
  return v;
}

Verdict determinism(const ToyRun& toy, const fs::path& first) {
  Verdict v;
  const auto a = tree_bytes(first);
  const auto b = tree_bytes(toy.run("second", 1));
  const auto c = tree_bytes(toy.run("jobs2", 2));
  const auto d = tree_bytes(toy.run("jobs3", 3));
  std::size_t png = 0;
  for (const auto& [name, _] : a) png += name.size() > 4 && name.compare(name.size() - 4, 4, ".png") == 0;
  v.require(png > 0, "no images written");
  for (const auto* other : {&b, &c, &d}) {
    v.require(other->size() == a.size(), "different file sets");
    for (const auto& [name, bytes] : a) {
      auto it = other->find(name);
      v.require(it != other->end() && it->second == bytes, "bytes differ in " + name);
    }
  }
  if (v.pass)
    v.detail = std::to_string(a.size()) + " files (" + std::to_string(png) +
               " images) identical across two runs and jobs = 1, 2, 3";
  return v;
}

}  // namespace

int main() {
  psis::set_log_quiet(true);
  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << v.detail << std::endl;
  };

  report(1, "constraint soundness", constraint_soundness);
  report(2, "compositor locality and soundness", compositor_locality);
  report(3, "class conservation", class_conservation);
  report(4, "drop-pick inequality oracle", drop_pick_oracle);
  report(5, "balancing effectiveness", balancing_effectiveness);
  report(6, "class-balanced loss", class_balanced_loss);
  report(7, "progressive plan", progressive_plan);

  std::unique_ptr<ToyRun> toy;
  fs::path first;
  try {
    toy = std::make_unique<ToyRun>();
    first = toy->run("first", 1);
  } catch (const std::exception& e) {
    std::cout << "FAIL [8] accounting identity: exception: " << e.what() << '\n'
              << "FAIL [9] determinism: toy pipeline did not run" << std::endl;
    return 1;
  }
  report(8, "accounting identity", [&] { return accounting_identity(first); });
  report(9, "determinism", [&] { return determinism(*toy, first); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

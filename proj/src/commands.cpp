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


#include "psis/commands.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "psis/balancing.hpp"
#include "psis/error.hpp"
#include "psis/loss_weights.hpp"
#include "psis/matching.hpp"
#include "psis/progressive.hpp"
#include "psis/util.hpp"

namespace psis {

namespace fs = std::filesystem;

namespace {

constexpr const char* kImageDir = "images";

DetectionDataset load_input(const RunConfig& cfg) {
  if (cfg.annotations.empty()) throw ConfigError("--annotations is required");
  return parse_dataset(cfg.annotations, cfg.images);
}

void require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("--out is required");
}

void make_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create " + cfg.out.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(1) + "\n"); }

nlohmann::ordered_json info_block(const RunConfig& cfg, const std::string& stage) {
  return {{"description", "PSIS toolkit output"}, {"stage", stage}, {"config_hash", cfg.hash()}};
}

/// Synthetic records point into the output image directory.
std::vector<GeneratedImage> with_image_dir(std::vector<GeneratedImage> images) {
  for (auto& g : images) g.record.file_name = std::string(kImageDir) + "/" + g.record.file_name;
  return images;
}

void write_dataset(const RunConfig& cfg, const std::string& name, const std::string& stage,
                   const std::vector<ImageRecord>& images, const std::vector<Annotation>& annotations,
                   const std::vector<Category>& categories) {
  DetectionDataset ds(images, annotations, categories);
  ds.set_extra({{"info", info_block(cfg, stage)}});
  serialize_dataset(ds, cfg.out / name);
}

void write_generated_dataset(const RunConfig& cfg, const std::string& name, const std::string& stage,
                             const std::vector<GeneratedImage>& images, const std::vector<Category>& categories) {
  std::vector<ImageRecord> recs;
  std::vector<Annotation> anns;
  for (const auto& g : with_image_dir(images)) {
    recs.push_back(g.record);
    anns.insert(anns.end(), g.annotations.begin(), g.annotations.end());
  }
  write_dataset(cfg, name, stage, recs, anns, categories);
}

void write_histogram(const RunConfig& cfg, const std::string& name, const InstanceDistribution& d,
                     const std::vector<Category>& categories) {
  std::ostringstream s;
  write_histogram_csv(d, categories, s);
  write_text(cfg.out / name, s.str());
}

void write_moves(const RunConfig& cfg, const std::vector<Move>& moves) {
  std::ostringstream s;
  s << "# kind,image_id,class_id,M_c,M,M_Ic,M_I\n";
  write_move_log(moves, s);
  write_text(cfg.out / "move_log.txt", s.str());
}

/// Renders every distinct generated image once.
void render_all(const RunConfig& cfg, SwitchPlanner& planner, const std::vector<GeneratedImage>& images) {
  std::set<ImageId> seen;
  std::vector<GeneratedImage> unique;
  for (const auto& g : images)
    if (seen.insert(g.record.id).second) unique.push_back(g);
  DiskImageSource source(cfg.images);
  write_generated(unique, planner, source, cfg.out / kImageDir, cfg.pipeline.jobs);
}

nlohmann::ordered_json provenance(const RunConfig& cfg, const std::vector<GeneratedImage>& images,
                                  const DetectionDataset& ori) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  std::set<ImageId> seen;
  for (const auto& g : images) {
    if (!seen.insert(g.record.id).second) continue;
    const bool is_a = g.side == Side::kA;
    const ImageId base = is_a ? g.quad.image_a : g.quad.image_b;
    const ImageId other = is_a ? g.quad.image_b : g.quad.image_a;
    arr.push_back({{"image_id", g.record.id},
                   {"file_name", std::string(kImageDir) + "/" + g.record.file_name},
                   {"quadruple", g.quad.id},
                   {"side", is_a ? "A" : "B"},
                   {"class_id", g.quad.class_id},
                   {"base_image", ori.image(base).file_name},
                   {"source_image", ori.image(other).file_name},
                   {"seed", cfg.pipeline.seed},
                   {"blur_sigma", cfg.pipeline.switching.blur.sigma},
                   {"band_width", cfg.pipeline.switching.blur.band_width},
                   {"inpaint", cfg.pipeline.switching.inpaint}});
  }
  return {{"config_hash", cfg.hash()}, {"images", std::move(arr)}};
}

CandidateSet candidates_for(const RunConfig& cfg, const DetectionDataset& ds) {
  if (!cfg.candidates.empty()) return CandidateSet::load(cfg.candidates);
  return build_candidate_set(ds, cfg.pipeline.match, cfg.pipeline.seed, cfg.pipeline.jobs);
}

void print_counts(std::ostream& out, const std::string& label, std::size_t n) { out << label << '=' << n << '\n'; }

}  // namespace

void run_build_candidates(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  const DetectionDataset ds = load_input(cfg);
  const CandidateSet cs = build_candidate_set(ds, cfg.pipeline.match, cfg.pipeline.seed, cfg.pipeline.jobs);
  if (cs.total_size() == 0) log_event("warn", "empty_candidate_set", {{"annotations", cfg.annotations.string()}});
  make_out_dir(cfg);
  auto j = cs.to_json();
  j["config_hash"] = cfg.hash();
  write_json(cfg.out / "candidates.json", j);
  out << "class_id,name,quadruples\n";
  for (CategoryId c : cs.classes()) out << c << ',' << ds.category(c).name << ',' << cs.size(c) << '\n';
}

void run_equalize(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  const DetectionDataset ds = load_input(cfg);
  CandidateSet cs = candidates_for(cfg, ds);
  SwitchPlanner planner(ds, cfg.pipeline.switching);
  IdAllocator ids(ds);
  const std::size_t target = cfg.pipeline.equal_target > 0 ? static_cast<std::size_t>(cfg.pipeline.equal_target)
                                                           : ds.images().size();
  const EqualSampleResult equ = equal_sample(cs, target, planner, ids);
  make_out_dir(cfg);
  render_all(cfg, planner, equ.images);
  write_generated_dataset(cfg, "omega_equ.json", "equalized", equ.images, ds.categories());
  write_histogram(cfg, "histogram_equ.csv", distribution_of(equ.images, ds.category_ids()), ds.categories());
  write_json(cfg.out / "candidates.json", cs.to_json());
  print_counts(out, "equalized_images", equ.images.size());
}

void run_balance(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  const DetectionDataset ds = load_input(cfg);
  CandidateSet cs = candidates_for(cfg, ds);
  SwitchPlanner planner(ds, cfg.pipeline.switching);
  IdAllocator ids(ds);
  const auto classes = ds.category_ids();
  const std::size_t target = cfg.pipeline.equal_target > 0 ? static_cast<std::size_t>(cfg.pipeline.equal_target)
                                                           : ds.images().size();
  EqualSampleResult equ = equal_sample(cs, target, planner, ids);
  const InstanceDistribution before = distribution_of(equ.images, classes);

  std::map<CategoryId, double> ori_shares;
  const auto ori_dist = distribution_stats(ds);
  for (CategoryId c : classes) ori_shares[c] = ori_dist.share(c);
  Balancer balancer(equ.images, cs, planner, ids, cfg.pipeline.balance, classes);
  balancer.run_stage1(cfg.pipeline.balance.baseline == BaselineScope::kOriginal ? &ori_shares : nullptr);
  balancer.run_stage2();
  const BalanceOutcome res = balancer.outcome();

  make_out_dir(cfg);
  std::vector<GeneratedImage> all = equ.images;
  all.insert(all.end(), res.images.begin(), res.images.end());
  render_all(cfg, planner, all);
  write_generated_dataset(cfg, "omega_equ.json", "equalized", equ.images, ds.categories());
  write_generated_dataset(cfg, "omega_uni.json", "uniform", res.images, ds.categories());
  write_histogram(cfg, "histogram_equ.csv", before, ds.categories());
  write_histogram(cfg, "histogram_uni.csv", balancer.distribution(), ds.categories());
  write_moves(cfg, res.moves);
  write_json(cfg.out / "candidates.json", cs.to_json());
  print_counts(out, "equalized_images", equ.images.size());
  print_counts(out, "uniform_images", res.images.size());
  print_counts(out, "moves", res.moves.size());
  out << "entropy_equ=" << std::setprecision(6) << normalized_entropy(before) << '\n';
  out << "entropy_uni=" << normalized_entropy(balancer.distribution()) << '\n';
}

void run_weights(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  const DetectionDataset ds = load_input(cfg);
  const ClassWeightTable table(instance_counts(ds), cfg.pipeline.gamma);
  std::ostringstream s;
  table.write_csv(ds.categories(), s);
  make_out_dir(cfg);
  write_text(cfg.out / "weights.csv", s.str());
  out << s.str();
}

void run_plan(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  if (cfg.ap_report.empty()) throw ConfigError("--ap-report is required");
  const DetectionDataset ds = load_input(cfg);
  const auto classes = ds.category_ids();
  const ApReport report = load_ap_report(cfg.ap_report);
  const AugmentationPlan plan = make_plan(report, cfg.pipeline.k, cfg.pipeline.p, image_counts(ds, {}, classes), classes);
  make_out_dir(cfg);
  write_json(cfg.out / "plan.json", plan.to_json());
  out << "class_id,ap,rank,theta,basis,quota\n";
  for (const auto& e : plan.entries)
    out << e.class_id << ',' << e.ap << ',' << e.rank << ',' << e.theta << ',' << e.basis << ',' << e.quota << '\n';
}

void run_stats(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  const DetectionDataset ds = load_input(cfg);
  const InstanceDistribution d = distribution_stats(ds);
  make_out_dir(cfg);
  write_histogram(cfg, "histogram.csv", d, ds.categories());
  print_counts(out, "images", ds.images().size());
  print_counts(out, "instances", static_cast<std::size_t>(d.total()));
  out << "entropy=" << std::setprecision(6) << normalized_entropy(d) << '\n';
}

std::string run_pipeline(const RunConfig& cfg, bool resume, std::ostream& out) {
  cfg.validate();
  require_out(cfg);
  if (cfg.ap_dir.empty() && !scheduled_epochs(cfg.pipeline.period, cfg.pipeline.t_total).empty())
    throw ConfigError("--ap-dir is required when augmentation rounds are scheduled");
  const DetectionDataset ds = load_input(cfg);
  cfg.pipeline.validate(ds.category_ids().size());

  std::unique_ptr<Pipeline> pipe;
  if (resume) {
    const fs::path ck = cfg.out / "checkpoint.json";
    std::ifstream in(ck);
    if (!in) throw IoError("cannot open checkpoint " + ck.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("checkpoint " + ck.string() + ": " + e.what(), e.byte);
    }
    pipe = Pipeline::resume(ds, cfg.pipeline, j, cfg.hash());
  } else {
    pipe = std::make_unique<Pipeline>(ds, cfg.pipeline);
    if (!cfg.candidates.empty()) {
      pipe->init(CandidateSet::load(cfg.candidates));
    } else {
      pipe->init();
    }
  }

  DirectoryApSource source(cfg.ap_dir);
  const PipelineStatus status = pipe->advance(source);
  make_out_dir(cfg);
  write_json(cfg.out / "checkpoint.json", pipe->checkpoint(cfg.hash()));

  const std::string status_text = status == PipelineStatus::kComplete ? "complete" : "paused";
  if (status == PipelineStatus::kPaused) {
    const int next = pipe->epoch() + 1;
    write_json(cfg.out / "manifest.json", {{"config_hash", cfg.hash()},
                                           {"status", status_text},
                                           {"epoch", pipe->epoch()},
                                           {"waiting_for", DirectoryApSource::file_name(next)}});
    out << "status=paused\nwaiting_for=" << (cfg.ap_dir / DirectoryApSource::file_name(next)).string() << '\n';
    return status_text;
  }

  const auto& cats = ds.categories();
  const auto classes = ds.category_ids();
  const auto& rounds = pipe->rounds();
  std::vector<GeneratedImage> all = pipe->equalized();
  const auto synth = pipe->synthetic();
  all.insert(all.end(), synth.begin(), synth.end());
  render_all(cfg, pipe->planner(), all);

  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  auto emit = [&](const std::string& name) { files.push_back(name); };

  write_generated_dataset(cfg, "omega_equ.json", "equalized", pipe->equalized(), cats);
  emit("omega_equ.json");
  write_generated_dataset(cfg, "omega_uni.json", "uniform", pipe->uniform(), cats);
  emit("omega_uni.json");
  nlohmann::ordered_json round_counts = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const std::string n = "omega_aug_r" + std::to_string(r + 1) + ".json";
    write_generated_dataset(cfg, n, "augmentation round " + std::to_string(r + 1), rounds[r].images, cats);
    emit(n);
    const std::string pn = "plan_r" + std::to_string(r + 1) + ".json";
    auto pj = rounds[r].plan.to_json();
    pj["epoch"] = rounds[r].epoch;
    write_json(cfg.out / pn, pj);
    emit(pn);
    round_counts.push_back(rounds[r].images.size());
  }

  // Union: originals as-is, then uniform, then each round.
  std::vector<ImageRecord> recs = ds.images();
  std::vector<Annotation> anns = ds.annotations();
  for (const auto& g : with_image_dir(synth)) {
    recs.push_back(g.record);
    anns.insert(anns.end(), g.annotations.begin(), g.annotations.end());
  }
  write_dataset(cfg, "omega_psis.json", "union", recs, anns, cats);
  emit("omega_psis.json");

  for (std::size_t stage = 0; stage <= rounds.size(); ++stage) {
    std::ostringstream s;
    pipe->weight_table(stage).write_csv(cats, s);
    const std::string n = "weights_stage" + std::to_string(stage) + ".csv";
    write_text(cfg.out / n, s.str());
    emit(n);
  }

  write_histogram(cfg, "histogram_ori.csv", distribution_stats(ds), cats);
  emit("histogram_ori.csv");
  write_histogram(cfg, "histogram_equ.csv", distribution_of(pipe->equalized(), classes), cats);
  emit("histogram_equ.csv");
  write_histogram(cfg, "histogram_uni.csv", distribution_of(pipe->uniform(), classes), cats);
  emit("histogram_uni.csv");
  write_moves(cfg, pipe->moves());
  emit("move_log.txt");
  write_json(cfg.out / "candidates.json", pipe->candidates().to_json());
  emit("candidates.json");
  write_json(cfg.out / "provenance.json", provenance(cfg, all, ds));
  emit("provenance.json");

  std::size_t aug_total = 0;
  for (const auto& r : rounds) aug_total += r.images.size();
  const std::size_t psis = recs.size();
  write_json(cfg.out / "manifest.json", {{"config_hash", cfg.hash()},
                                         {"status", status_text},
                                         {"epoch", pipe->epoch()},
                                         {"counts",
                                          {{"original", ds.images().size()},
                                           {"equalized", pipe->equalized().size()},
                                           {"uniform", pipe->uniform().size()},
                                           {"augmentation_rounds", round_counts},
                                           {"augmentation_total", aug_total},
                                           {"psis", psis}}},
                                         {"files", files}});
  out << "status=complete\n";
  print_counts(out, "original", ds.images().size());
  print_counts(out, "uniform", pipe->uniform().size());
  print_counts(out, "augmentation", aug_total);
  print_counts(out, "psis", psis);
  return status_text;
}

}  // namespace psis

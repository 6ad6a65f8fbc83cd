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


// psis: command-line front end for candidate building, balancing, loss
// weights, progressive planning and the full pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "psis/commands.hpp"
#include "psis/config.hpp"
#include "psis/error.hpp"
#include "psis/util.hpp"

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"--annotations", "annotations", "COCO annotation file"},
    {"--images", "images", "Image root directory"},
    {"--out", "out", "Output directory"},
    {"--seed", "seed", "Global seed"},
    {"--jobs", "jobs", "Worker threads"},
    {"--epsilon", "epsilon", "Shape threshold"},
    {"--rho1", "rho1", "Lower scale bound"},
    {"--rho2", "rho2", "Upper scale bound"},
    {"--gamma", "gamma", "Class-balanced loss regularizer in (0, 1]"},
    {"--K", "K", "Number of lowest-AP classes augmented per round"},
    {"--p", "p", "Base augmentation percentage"},
    {"--T", "T", "Epochs between augmentation rounds"},
    {"--T-total", "T_total", "Total epochs"},
    {"--blur-sigma", "blur_sigma", "Gaussian sigma for the boundary blur"},
    {"--band-width", "band_width", "Blur band width in pixels"},
    {"--target", "equal_target", "Images in the equalized set (0 = size of the input)"},
    {"--baseline", "baseline", "Stage-1 baseline shares: equalized|original"},
    {"--basis", "basis", "Plan quota basis: train|original"},
    {"--counts", "counts", "Instance counts for weights: train|original"},
    {"--candidates", "candidates", "Reuse a candidate-set file"},
    {"--ap-dir", "ap_dir", "Directory polled for ap_epoch_<t>.json"},
    {"--ap-report", "ap_report", "AP report file for the plan subcommand"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-switching data augmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::map<std::string, std::string> given;
  bool no_inpaint = false;
  bool quiet = false;
  bool resume = false;

  app.add_option("--config", config_path, "key = value config file; flags override it");
  for (const Flag& f : kFlags) {
    const std::string key = f.key;
    app.add_option_function<std::string>(
        f.name, [&given, key](const std::string& v) { given[key] = v; }, f.help);
  }
  app.add_flag("--no-inpaint", no_inpaint, "Leave vacated pixels unfilled");
  app.add_flag("--quiet", quiet, "Suppress log lines");

  auto* build = app.add_subcommand("build-candidates", "Build the per-class quadruple pools");
  auto* equalize = app.add_subcommand("equalize", "Sample the same number of quadruples per class");
  auto* balance = app.add_subcommand("balance", "Equalize, then run both drop-pick stages");
  auto* weights = app.add_subcommand("weights", "Export class-balanced loss weights");
  auto* plan = app.add_subcommand("plan", "Turn an AP report into an augmentation plan");
  auto* pipeline = app.add_subcommand("pipeline", "Run the progressive pipeline");
  pipeline->add_flag("--resume", resume, "Continue from <out>/checkpoint.json");
  auto* stats = app.add_subcommand("stats", "Per-class instance histogram");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  psis::set_log_quiet(quiet);

  try {
    psis::RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [k, v] : given) cfg.set(k, v);
    if (no_inpaint) cfg.set("inpaint", "false");
    psis::log_event("info", "start",
                    {{"command", app.get_subcommands().front()->get_name()}, {"config_hash", cfg.hash()}});

    if (build->parsed()) psis::run_build_candidates(cfg, std::cout);
    if (equalize->parsed()) psis::run_equalize(cfg, std::cout);
    if (balance->parsed()) psis::run_balance(cfg, std::cout);
    if (weights->parsed()) psis::run_weights(cfg, std::cout);
    if (plan->parsed()) psis::run_plan(cfg, std::cout);
    if (pipeline->parsed()) psis::run_pipeline(cfg, resume, std::cout);
    if (stats->parsed()) psis::run_stats(cfg, std::cout);
  } catch (const psis::Error& e) {
    psis::log_event("error", "failed", {{"code", std::to_string(e.exit_code())}, {"message", e.what()}});
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    psis::log_event("error", "failed", {{"code", "3"}, {"message", e.what()}});
    return 3;
  } catch (const std::exception& e) {
    psis::log_event("error", "failed", {{"code", "2"}, {"message", e.what()}});
    return 2;
  }
  return 0;
}

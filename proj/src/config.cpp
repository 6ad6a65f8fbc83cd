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


#include "psis/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "psis/error.hpp"
#include "psis/util.hpp"

namespace psis {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

int to_int32(const std::string& key, const std::string& v) {
  const std::int64_t x = to_int(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key + ": out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "annotations", "images",          "out",        "ap_dir",  "ap_report", "candidates",           "seed",
      "jobs",        "epsilon",         "rho1",       "rho2",             "normalized_size",
      "max_pairs_per_class", "border_touch_limit", "blur_sigma", "band_width", "inpaint",
      "attach_threshold", "stage1_iterations", "min_growth", "max_shrink", "stage2_tolerance",
      "baseline",    "gamma",           "K",          "p",                "T",
      "T_total",     "equal_target",    "basis",      "counts"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  PipelineConfig& p = pipeline;
  if (key == "annotations") {
    annotations = v;
  } else if (key == "images") {
    images = v;
  } else if (key == "out") {
    out = v;
  } else if (key == "ap_dir") {
    ap_dir = v;
  } else if (key == "ap_report") {
    ap_report = v;
  } else if (key == "candidates") {
    candidates = v;
  } else if (key == "seed") {
    std::uint64_t s = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("seed: not an unsigned integer: '" + v + "'");
    p.seed = s;
  } else if (key == "jobs") {
    p.jobs = to_int32(key, v);
  } else if (key == "epsilon") {
    p.match.epsilon = to_double(key, v);
  } else if (key == "rho1") {
    p.match.rho1 = to_double(key, v);
  } else if (key == "rho2") {
    p.match.rho2 = to_double(key, v);
  } else if (key == "normalized_size") {
    p.match.normalized_size = to_int32(key, v);
  } else if (key == "max_pairs_per_class") {
    const std::int64_t n = to_int(key, v);
    if (n < 0) throw ConfigError("max_pairs_per_class must be >= 0");
    p.match.max_pairs_per_class = static_cast<std::size_t>(n);
  } else if (key == "border_touch_limit") {
    p.match.border_touch_limit = to_double(key, v);
  } else if (key == "blur_sigma") {
    p.switching.blur.sigma = to_double(key, v);
  } else if (key == "band_width") {
    p.switching.blur.band_width = to_int32(key, v);
  } else if (key == "inpaint") {
    p.switching.inpaint = to_bool(key, v);
  } else if (key == "attach_threshold") {
    p.switching.attach_threshold = to_double(key, v);
  } else if (key == "stage1_iterations") {
    p.balance.stage1_iterations = to_int32(key, v);
  } else if (key == "min_growth") {
    p.balance.min_growth = to_double(key, v);
  } else if (key == "max_shrink") {
    p.balance.max_shrink = to_double(key, v);
  } else if (key == "stage2_tolerance") {
    p.balance.stage2_tolerance = to_double(key, v);
  } else if (key == "baseline") {
    if (v == "equalized") {
      p.balance.baseline = BaselineScope::kEqualized;
    } else if (v == "original") {
      p.balance.baseline = BaselineScope::kOriginal;
    } else {
      throw ConfigError("baseline must be 'equalized' or 'original'");
    }
  } else if (key == "gamma") {
    p.gamma = to_double(key, v);
  } else if (key == "K") {
    p.k = to_int32(key, v);
  } else if (key == "p") {
    p.p = to_double(key, v);
  } else if (key == "T") {
    p.period = to_int32(key, v);
  } else if (key == "T_total") {
    p.t_total = to_int32(key, v);
  } else if (key == "equal_target") {
    p.equal_target = to_int(key, v);
  } else if (key == "basis") {
    if (v == "train") {
      p.basis = BasisScope::kTrain;
    } else if (v == "original") {
      p.basis = BasisScope::kOriginal;
    } else {
      throw ConfigError("basis must be 'train' or 'original'");
    }
  } else if (key == "counts") {
    if (v == "train") {
      p.counts = CountScope::kTrain;
    } else if (v == "original") {
      p.counts = CountScope::kOriginal;
    } else {
      throw ConfigError("counts must be 'train' or 'original'");
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::load_text(std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  load_text(in, path.string());
}

void RunConfig::validate() const { pipeline.validate(); }

std::string RunConfig::canonical() const {
  const PipelineConfig& p = pipeline;
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(p.seed);
  kv["epsilon"] = fmt(p.match.epsilon);
  kv["rho1"] = fmt(p.match.rho1);
  kv["rho2"] = fmt(p.match.rho2);
  kv["normalized_size"] = std::to_string(p.match.normalized_size);
  kv["max_pairs_per_class"] = std::to_string(p.match.max_pairs_per_class);
  kv["border_touch_limit"] = fmt(p.match.border_touch_limit);
  kv["blur_sigma"] = fmt(p.switching.blur.sigma);
  kv["band_width"] = std::to_string(p.switching.blur.band_width);
  kv["inpaint"] = p.switching.inpaint ? "true" : "false";
  kv["attach_threshold"] = fmt(p.switching.attach_threshold);
  kv["stage1_iterations"] = std::to_string(p.balance.stage1_iterations);
  kv["min_growth"] = fmt(p.balance.min_growth);
  kv["max_shrink"] = fmt(p.balance.max_shrink);
  kv["stage2_tolerance"] = fmt(p.balance.stage2_tolerance);
  kv["baseline"] = p.balance.baseline == BaselineScope::kEqualized ? "equalized" : "original";
  kv["gamma"] = fmt(p.gamma);
  kv["K"] = std::to_string(p.k);
  kv["p"] = fmt(p.p);
  kv["T"] = std::to_string(p.period);
  kv["T_total"] = std::to_string(p.t_total);
  kv["equal_target"] = std::to_string(p.equal_target);
  kv["basis"] = p.basis == BasisScope::kTrain ? "train" : "original";
  kv["counts"] = p.counts == CountScope::kTrain ? "train" : "original";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return fnv1a_hex(canonical()); }

}  // namespace psis

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
#include <string>

#include "psis/config.hpp"

namespace psis {

/// Subcommand bodies. Each one loads its inputs before creating anything under
/// `cfg.out`, so configuration and data errors leave no output behind.
/// Summaries go to `out`; errors are thrown (see error.hpp for exit codes).
void run_build_candidates(const RunConfig& cfg, std::ostream& out);
void run_equalize(const RunConfig& cfg, std::ostream& out);
void run_balance(const RunConfig& cfg, std::ostream& out);
void run_weights(const RunConfig& cfg, std::ostream& out);
void run_plan(const RunConfig& cfg, std::ostream& out);
void run_stats(const RunConfig& cfg, std::ostream& out);

/// Returns "complete" or "paused". With `resume`, state is read from
/// `cfg.out / checkpoint.json`.
std::string run_pipeline(const RunConfig& cfg, bool resume, std::ostream& out);

}  // namespace psis

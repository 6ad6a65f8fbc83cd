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
#include <set>
#include <tuple>

#include "psis/coco.hpp"
#include "psis/mask.hpp"

namespace psis::testing {

// Slow, independent re-implementations used as test oracles.

/// Crop to the tight box and sample pixel centers onto an s x s grid.
BinaryMask naive_normalize(const BinaryMask& m, int s);
/// Symmetric difference of the normalized masks over the larger foreground.
double naive_shape(const BinaryMask& a, const BinaryMask& b, int s);

using PairKey = std::tuple<AnnotationId, AnnotationId>;

/// Every same-class, non-crowd, off-border pair on distinct images that passes
/// both constraints at the default thresholds, with the scale bounds checked in
/// exact integer arithmetic.
std::set<PairKey> brute_force_pairs(const DetectionDataset& ds, CategoryId c, int s);

/// The drop-pick inequality evaluated with exact rationals.
bool rational_drop_pick(std::int64_t mc, std::int64_t m, std::int64_t mic, std::int64_t mi);

}  // namespace psis::testing

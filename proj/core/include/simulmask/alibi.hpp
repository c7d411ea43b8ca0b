// Copyright 2026 The SimulMask Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "simulmask/masks.hpp"
#include "simulmask/tensor.hpp"

namespace simulmask {

/// Per-head ALiBi slopes m_h, strictly positive and strictly decreasing.
struct HeadSlopes {
  std::vector<float> slopes;
};

/// slope_h = 2^(-8h / n_heads), h = 1..n_heads.
HeadSlopes alibi_slopes(std::size_t n_heads);

/// L x L additive bias defined on the visible entries of `mask`; hidden
/// entries hold 0 and must be ignored.
struct PositionalBias {
  AttentionMaskSpec mask;
  Matrix values;

  float at(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// entry(i, j) = -slope * (i - j) for j <= i.
PositionalBias standard_alibi(std::size_t length, float slope);

/// Re-indexes each row over its visible keys: the r-th visible key counting
/// back from the diagonal gets -slope * r, so a row with hidden keys carries
/// the same biases a KV cache lacking those keys would produce.
PositionalBias modified_alibi(const AttentionMaskSpec& mask, float slope);

enum class BiasMode { kStandard, kModified };

/// One bias per head for a self-attention mask. kStandard measures absolute
/// distance i - j; kModified measures visible-rank distance.
std::vector<PositionalBias> head_biases(const AttentionMaskSpec& mask,
                                        const HeadSlopes& slopes, BiasMode mode);

/// CSV "row,col,bias" over visible entries only.
void write_bias_csv(std::ostream& out, const PositionalBias& bias);

}  // namespace simulmask

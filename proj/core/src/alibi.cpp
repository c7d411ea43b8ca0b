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

#include "simulmask/alibi.hpp"

#include <cmath>
#include <ostream>

namespace simulmask {

HeadSlopes alibi_slopes(std::size_t n_heads) {
  require(n_heads >= 1, ErrorKind::kConfig, "alibi_slopes: zero heads");
  HeadSlopes out;
  out.slopes.reserve(n_heads);
  for (std::size_t h = 1; h <= n_heads; ++h) {
    out.slopes.push_back(static_cast<float>(
        std::exp2(-8.0 * static_cast<double>(h) / static_cast<double>(n_heads))));
  }
  return out;
}

PositionalBias standard_alibi(std::size_t length, float slope) {
  require(slope > 0.0f, ErrorKind::kConfig, "standard_alibi: slope must be positive");
  PositionalBias bias{causal_mask(length), Matrix(length, length)};
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      bias.values(i, j) = 0.0f - slope * static_cast<float>(i - j);
  return bias;
}

PositionalBias modified_alibi(const AttentionMaskSpec& mask, float slope) {
  require(slope > 0.0f, ErrorKind::kConfig, "modified_alibi: slope must be positive");
  PositionalBias bias{mask, Matrix(mask.rows(), mask.cols())};
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    std::size_t rank = 0;
    bool any = false;
    for (std::size_t j = mask.cols(); j-- > 0;) {
      if (!mask.visible(i, j)) continue;
      bias.values(i, j) = 0.0f - slope * static_cast<float>(rank++);
      any = true;
    }
    require(any, ErrorKind::kDegenerate,
            "modified_alibi: row " + std::to_string(i) + " is fully hidden");
  }
  return bias;
}

std::vector<PositionalBias> head_biases(const AttentionMaskSpec& mask,
                                        const HeadSlopes& slopes, BiasMode mode) {
  mask.validate_self_attention();
  std::vector<PositionalBias> out;
  out.reserve(slopes.slopes.size());
  for (float slope : slopes.slopes) {
    if (mode == BiasMode::kModified) {
      out.push_back(modified_alibi(mask, slope));
    } else {
      PositionalBias b = standard_alibi(mask.rows(), slope);
      b.mask = mask;
      out.push_back(std::move(b));
    }
  }
  return out;
}

void write_bias_csv(std::ostream& out, const PositionalBias& bias) {
  out << "row,col,bias\n";
  for (std::size_t i = 0; i < bias.mask.rows(); ++i)
    for (std::size_t j = 0; j < bias.mask.cols(); ++j)
      if (bias.mask.visible(i, j)) out << i << ',' << j << ',' << bias.values(i, j) << '\n';
}

}  // namespace simulmask

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
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "simulmask/policy.hpp"
#include "simulmask/tensor.hpp"

namespace simulmask {

/// Explicit visible/hidden grid. Self-attention masks are square and never
/// looser than causal; cross-attention masks are target x source.
class AttentionMaskSpec {
 public:
  AttentionMaskSpec() = default;
  AttentionMaskSpec(std::size_t rows, std::size_t cols, bool visible = false)
      : rows_(rows), cols_(cols), cells_(rows * cols, visible ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_; }

  bool visible(std::size_t i, std::size_t j) const { return cells_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool visible) {
    cells_[i * cols_ + j] = visible ? 1 : 0;
  }
  void hide_range(std::size_t row, std::size_t col_begin, std::size_t col_end);

  std::size_t visible_count(std::size_t row) const;
  std::vector<std::uint32_t> visible_keys(std::size_t row) const;

  /// Throws unless square, diagonal visible and nothing above the diagonal.
  void validate_self_attention() const;

  /// Additive form: 0 for visible, kMaskedValue for hidden.
  template <typename T>
  BasicMatrix<T> to_additive() const {
    BasicMatrix<T> out(rows_, cols_, T(0));
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        if (!visible(i, j)) out(i, j) = kMaskedValue<T>;
    return out;
  }

  friend bool operator==(const AttentionMaskSpec&, const AttentionMaskSpec&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// visible iff j <= i.
AttentionMaskSpec causal_mask(std::size_t length);

/// Block lower-triangular source mask whose blocks are the read chunks.
AttentionMaskSpec encoder_mask(const ReadSchedule& schedule);

/// T x S: visible iff j <= f(t) (both 1-based).
AttentionMaskSpec cross_attention_mask(const DecisionPolicy& policy,
                                       std::size_t target_len);

/// Causal mask over the whole prompt layout, restricted so that every row
/// sees exactly the source prefix it would see during simultaneous decoding
/// under `policy`:
///  - the row predicting target t sees source keys 1..f(t);
///  - mid-prompt rows before the predictor of t_1 see source keys 1..f(1);
///  - the final target row predicts nothing and keeps the full source.
AttentionMaskSpec simul_mask(const PromptLayout& layout, const DecisionPolicy& policy);

// ---------------------------------------------------------------------------
// ASCII dump: header "L=<n> policy=<desc>", then one line per row with '#'
// for visible and '.' for hidden.

void write_mask_dump(std::ostream& out, const AttentionMaskSpec& mask,
                     const std::string& policy_desc);

struct MaskDump {
  AttentionMaskSpec mask;
  std::string policy_desc;
};

MaskDump read_mask_dump(std::istream& in);

}  // namespace simulmask

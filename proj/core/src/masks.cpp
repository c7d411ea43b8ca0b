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

#include "simulmask/masks.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace simulmask {

void AttentionMaskSpec::hide_range(std::size_t row, std::size_t col_begin,
                                   std::size_t col_end) {
  for (std::size_t j = col_begin; j < col_end; ++j) set(row, j, false);
}

std::size_t AttentionMaskSpec::visible_count(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < cols_; ++j) n += visible(row, j) ? 1 : 0;
  return n;
}

std::vector<std::uint32_t> AttentionMaskSpec::visible_keys(std::size_t row) const {
  std::vector<std::uint32_t> keys;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (visible(row, j)) keys.push_back(static_cast<std::uint32_t>(j));
  }
  return keys;
}

void AttentionMaskSpec::validate_self_attention() const {
  require(rows_ == cols_ && rows_ > 0, ErrorKind::kShape,
          "self-attention mask must be square and non-empty");
  for (std::size_t i = 0; i < rows_; ++i) {
    require(visible(i, i), ErrorKind::kDegenerate,
            "mask row " + std::to_string(i) + " hides its own position");
    for (std::size_t j = i + 1; j < cols_; ++j) {
      require(!visible(i, j), ErrorKind::kShape,
              "mask row " + std::to_string(i) + " attends to the future");
    }
  }
}

AttentionMaskSpec causal_mask(std::size_t length) {
  require(length >= 1, ErrorKind::kInput, "causal_mask: empty input");
  AttentionMaskSpec mask(length, length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  return mask;
}

AttentionMaskSpec encoder_mask(const ReadSchedule& schedule) {
  schedule.validate();
  const std::size_t s = schedule.source_len;
  AttentionMaskSpec mask(s, s);
  std::size_t chunk_end = 0;
  std::size_t row = 0;
  for (std::size_t size : schedule.chunk_sizes) {
    chunk_end += size;
    for (; row < chunk_end; ++row)
      for (std::size_t j = 0; j < chunk_end; ++j) mask.set(row, j, true);
  }
  return mask;
}

AttentionMaskSpec cross_attention_mask(const DecisionPolicy& policy,
                                       std::size_t target_len) {
  require(target_len >= 1, ErrorKind::kInput, "cross_attention_mask: empty target");
  require(policy.covers(target_len), ErrorKind::kPolicy,
          "cross_attention_mask: policy domain shorter than target");
  AttentionMaskSpec mask(target_len, policy.source_len());
  for (std::size_t t = 1; t <= target_len; ++t) {
    const std::size_t f = policy.reads_before(t);
    for (std::size_t j = 0; j < f; ++j) mask.set(t - 1, j, true);
  }
  return mask;
}

AttentionMaskSpec simul_mask(const PromptLayout& layout, const DecisionPolicy& policy) {
  layout.validate();
  require(policy.source_len() == layout.source_len, ErrorKind::kLayout,
          "simul_mask: policy source length " + std::to_string(policy.source_len()) +
              " != layout source length " + std::to_string(layout.source_len));
  require(policy.covers(layout.target_len), ErrorKind::kPolicy,
          "simul_mask: policy does not cover every target token");

  AttentionMaskSpec mask = causal_mask(layout.total());
  const std::size_t src = layout.source_begin();
  const std::size_t src_end = layout.mid_begin();

  // Mid-prompt rows, including the predictor of t_1, see the first read only.
  const std::size_t first_read = policy.reads_before(1);
  for (std::size_t row = layout.mid_begin(); row < layout.target_begin(); ++row) {
    mask.hide_range(row, src + first_read, src_end);
  }
  // Target row t predicts t + 1; the final target row keeps the full source.
  for (std::size_t t = 1; t < layout.target_len; ++t) {
    const std::size_t row = layout.target_begin() + t - 1;
    mask.hide_range(row, src + policy.reads_before(t + 1), src_end);
  }
  return mask;
}

void write_mask_dump(std::ostream& out, const AttentionMaskSpec& mask,
                     const std::string& policy_desc) {
  out << "L=" << mask.rows() << " policy=" << policy_desc << '\n';
  std::string line(mask.cols(), '.');
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) line[j] = mask.visible(i, j) ? '#' : '.';
    out << line << '\n';
  }
}

MaskDump read_mask_dump(std::istream& in) {
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorKind::kData,
          "mask dump: missing header");
  const auto space = header.find(" policy=");
  require(header.rfind("L=", 0) == 0 && space != std::string::npos, ErrorKind::kData,
          "mask dump: malformed header '" + header + "'");
  std::size_t n = 0;
  try {
    n = std::stoul(header.substr(2, space - 2));
  } catch (const std::exception&) {
    fail(ErrorKind::kData, "mask dump: bad size in header");
  }
  MaskDump dump{AttentionMaskSpec(n, n), header.substr(space + 8)};
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    require(static_cast<bool>(std::getline(in, line)) && line.size() == n,
            ErrorKind::kData, "mask dump: row " + std::to_string(i) + " malformed");
    for (std::size_t j = 0; j < n; ++j) {
      require(line[j] == '#' || line[j] == '.', ErrorKind::kData,
              "mask dump: unexpected character");
      dump.mask.set(i, j, line[j] == '#');
    }
  }
  return dump;
}

}  // namespace simulmask

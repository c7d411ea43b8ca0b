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
#include <span>
#include <string>
#include <vector>

namespace simulmask {

using Token = std::int32_t;

enum class Role : std::uint8_t { kPrePrompt = 0, kSource = 1, kMidPrompt = 2, kTarget = 3 };

const char* to_string(Role role);

/// Region map of a training sequence: pre-prompt, source, mid-prompt, target.
struct PromptLayout {
  std::size_t pre_prompt_len = 1;
  std::size_t source_len = 1;
  std::size_t mid_prompt_len = 1;
  std::size_t target_len = 1;

  std::size_t total() const {
    return pre_prompt_len + source_len + mid_prompt_len + target_len;
  }
  std::size_t source_begin() const { return pre_prompt_len; }
  std::size_t mid_begin() const { return pre_prompt_len + source_len; }
  std::size_t target_begin() const { return mid_begin() + mid_prompt_len; }

  /// Row whose output predicts target token t (1-based): the last mid-prompt
  /// row for t = 1, target row t - 1 afterwards.
  std::size_t predictor_row(std::size_t t) const { return target_begin() + t - 2; }

  Role role_at(std::size_t position) const;
  std::size_t index_in_role(std::size_t position) const;

  /// Throws a layout error unless every region is non-empty.
  void validate() const;

  friend bool operator==(const PromptLayout&, const PromptLayout&) = default;
};

/// f(t): cumulative source tokens read before emitting target token t.
class DecisionPolicy {
 public:
  enum class Kind { kWaitK, kTable };

  static DecisionPolicy wait_k(std::size_t k, std::size_t source_len);
  /// reads[t - 1] = f(t). Must be monotone and within [1, source_len].
  static DecisionPolicy table(std::vector<std::size_t> reads, std::size_t source_len);

  Kind kind() const { return kind_; }
  std::size_t k() const { return k_; }
  std::size_t source_len() const { return source_len_; }
  const std::vector<std::size_t>& reads() const { return reads_; }

  bool covers(std::size_t t) const;
  /// f(t) clipped to source_len. Throws a policy error when t is outside the
  /// policy's domain.
  std::size_t reads_before(std::size_t t) const;
  /// Unclipped read request, used against streams of unknown length.
  std::size_t requested_reads(std::size_t t) const;

  /// Same rule over a different (for example realized) source length.
  DecisionPolicy with_source_len(std::size_t source_len) const;

  /// Re-express a word-level policy in tokens. word_ends[w] is the token count
  /// after word w + 1; the identity map leaves the policy unchanged.
  DecisionPolicy to_tokens(std::span<const std::size_t> word_ends,
                           std::size_t max_target_len) const;

  /// "wait-3" or "table:1,2,4".
  std::string describe() const;

 private:
  DecisionPolicy(Kind kind, std::size_t k, std::vector<std::size_t> reads,
                 std::size_t source_len)
      : kind_(kind), k_(k), reads_(std::move(reads)), source_len_(source_len) {}

  Kind kind_;
  std::size_t k_;
  std::vector<std::size_t> reads_;
  std::size_t source_len_;
};

/// Chunked read schedule for an encoder-style source mask.
struct ReadSchedule {
  std::vector<std::size_t> chunk_sizes;
  std::size_t source_len = 0;

  void validate() const;
};

}  // namespace simulmask

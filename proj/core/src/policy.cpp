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

#include "simulmask/policy.hpp"

#include <algorithm>
#include <sstream>

#include "simulmask/error.hpp"

namespace simulmask {

const char* to_string(Role role) {
  switch (role) {
    case Role::kPrePrompt: return "pre_prompt";
    case Role::kSource: return "source";
    case Role::kMidPrompt: return "mid_prompt";
    case Role::kTarget: return "target";
  }
  return "?";
}

Role PromptLayout::role_at(std::size_t position) const {
  require(position < total(), ErrorKind::kLayout, "position outside layout");
  if (position < source_begin()) return Role::kPrePrompt;
  if (position < mid_begin()) return Role::kSource;
  if (position < target_begin()) return Role::kMidPrompt;
  return Role::kTarget;
}

std::size_t PromptLayout::index_in_role(std::size_t position) const {
  switch (role_at(position)) {
    case Role::kPrePrompt: return position;
    case Role::kSource: return position - source_begin();
    case Role::kMidPrompt: return position - mid_begin();
    case Role::kTarget: return position - target_begin();
  }
  return 0;
}

void PromptLayout::validate() const {
  require(pre_prompt_len >= 1 && source_len >= 1 && mid_prompt_len >= 1 &&
              target_len >= 1,
          ErrorKind::kLayout,
          "prompt layout regions must all be non-empty (P1, S, P2, T >= 1)");
}

DecisionPolicy DecisionPolicy::wait_k(std::size_t k, std::size_t source_len) {
  require(k >= 1, ErrorKind::kPolicy, "wait-k requires k >= 1");
  require(source_len >= 1, ErrorKind::kPolicy, "policy source length must be >= 1");
  return DecisionPolicy(Kind::kWaitK, k, {}, source_len);
}

DecisionPolicy DecisionPolicy::table(std::vector<std::size_t> reads,
                                     std::size_t source_len) {
  require(source_len >= 1, ErrorKind::kPolicy, "policy source length must be >= 1");
  require(!reads.empty(), ErrorKind::kPolicy, "table policy is empty");
  for (std::size_t i = 0; i < reads.size(); ++i) {
    require(reads[i] >= 1 && reads[i] <= source_len, ErrorKind::kPolicy,
            "table policy entry out of [1, source_len]");
    require(i == 0 || reads[i] >= reads[i - 1], ErrorKind::kPolicy,
            "table policy must be non-decreasing");
  }
  return DecisionPolicy(Kind::kTable, 0, std::move(reads), source_len);
}

bool DecisionPolicy::covers(std::size_t t) const {
  if (t == 0) return false;
  return kind_ == Kind::kWaitK || t <= reads_.size();
}

std::size_t DecisionPolicy::requested_reads(std::size_t t) const {
  require(covers(t), ErrorKind::kPolicy,
          "policy domain does not cover target step " + std::to_string(t));
  return kind_ == Kind::kWaitK ? k_ + t - 1 : reads_[t - 1];
}

std::size_t DecisionPolicy::reads_before(std::size_t t) const {
  return std::min(requested_reads(t), source_len_);
}

DecisionPolicy DecisionPolicy::with_source_len(std::size_t source_len) const {
  require(source_len >= 1, ErrorKind::kPolicy, "policy source length must be >= 1");
  if (kind_ == Kind::kWaitK) return wait_k(k_, source_len);
  std::vector<std::size_t> clipped = reads_;
  for (auto& r : clipped) r = std::min(r, source_len);
  return table(std::move(clipped), source_len);
}

DecisionPolicy DecisionPolicy::to_tokens(std::span<const std::size_t> word_ends,
                                         std::size_t max_target_len) const {
  require(word_ends.size() == source_len_, ErrorKind::kPolicy,
          "word boundary map must have one entry per source word");
  for (std::size_t w = 0; w < word_ends.size(); ++w) {
    require(word_ends[w] > (w == 0 ? 0 : word_ends[w - 1]), ErrorKind::kPolicy,
            "word boundary map must be strictly increasing");
  }
  std::vector<std::size_t> reads;
  reads.reserve(max_target_len);
  for (std::size_t t = 1; t <= max_target_len; ++t) {
    reads.push_back(word_ends[reads_before(t) - 1]);
  }
  return table(std::move(reads), word_ends.back());
}

std::string DecisionPolicy::describe() const {
  if (kind_ == Kind::kWaitK) return "wait-" + std::to_string(k_);
  std::ostringstream out;
  out << "table:";
  for (std::size_t i = 0; i < reads_.size(); ++i) out << (i ? "," : "") << reads_[i];
  return out.str();
}

void ReadSchedule::validate() const {
  require(source_len >= 1, ErrorKind::kSchedule, "read schedule over empty source");
  std::size_t sum = 0;
  for (std::size_t c : chunk_sizes) {
    require(c >= 1, ErrorKind::kSchedule, "read chunk sizes must be positive");
    sum += c;
  }
  require(sum == source_len, ErrorKind::kSchedule,
          "read chunks sum to " + std::to_string(sum) + ", source length is " +
              std::to_string(source_len));
}

}  // namespace simulmask

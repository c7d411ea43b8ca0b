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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "simulmask/loss_target.hpp"
#include "simulmask/policy.hpp"

namespace simulmask {

/// Reserved ids of the synthetic vocabulary; content tokens start at
/// kFirstContentToken.
inline constexpr Token kEosToken = 0;
inline constexpr Token kPrePromptToken = 1;
inline constexpr Token kMidPromptToken = 2;
inline constexpr Token kFirstContentToken = 3;

struct SentencePair {
  std::vector<Token> source;
  std::vector<Token> target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using Corpus = std::vector<SentencePair>;

/// Lays a sentence pair out as pre-prompt, source, mid-prompt, target, with
/// the end-of-sequence token appended to the target region.
struct PromptBuilder {
  std::vector<Token> pre_prompt{kPrePromptToken};
  std::vector<Token> mid_prompt{kMidPromptToken};
  std::optional<Token> eos = kEosToken;

  struct Built {
    std::vector<Token> tokens;
    PromptLayout layout;
  };

  Built build(const SentencePair& pair) const;

  /// Target-predicting rows: the last mid-prompt row through the penultimate
  /// target row, each labelled with the token it predicts.
  static std::vector<LossTarget> loss_targets(const Built& built);
};

enum class SyntheticTask { kCopy, kReverse, kShift };

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::kCopy;
  std::size_t shift = 0;  // used by kShift
  std::size_t sentences = 100;
  std::size_t min_len = 8;
  std::size_t max_len = 16;
  std::size_t vocab = 64;  // content tokens
  std::uint64_t seed = 0;
};

/// Parses "copy", "reverse" or "shift(n)" / "shift:n".
SyntheticSpec parse_task(const std::string& text, SyntheticSpec base = {});
std::string describe_task(const SyntheticSpec& spec);

/// Deterministic corpus. Source tokens are drawn without replacement when the
/// content vocabulary is at least the sentence length, so every source token
/// is unambiguous. copy: target = source; reverse: target = reversed source;
/// shift(n): target[i] = source[i + n], which leaves the target n tokens
/// shorter than the source (the end-of-sequence token added by
/// PromptBuilder closes it; no padding tokens are emitted).
Corpus gen_synthetic(const SyntheticSpec& spec);

/// Total model vocabulary for `content` content tokens.
inline std::size_t model_vocab_size(std::size_t content) {
  return content + static_cast<std::size_t>(kFirstContentToken);
}

/// JSON lines: {"source":[...],"target":[...]}.
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path, std::size_t vocab_size);

}  // namespace simulmask

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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simulmask/corpus.hpp"
#include "simulmask/kv_cache.hpp"
#include "simulmask/model.hpp"
#include "simulmask/policy.hpp"
#include "simulmask/training.hpp"

namespace simulmask {

enum class GenerationMode { kCached, kRecompute };

const char* to_string(GenerationMode mode);

enum class EventType { kRead, kWrite };

struct TraceEvent {
  EventType type = EventType::kRead;
  /// Tokens read, or the single token written.
  std::vector<Token> payload;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Read/write log of one simultaneous decoding session. d[i] is the number of
/// source tokens read before write i; flop_log[e] is the measured cost of
/// event e (reads in cached mode pay for ingesting the tokens they bring in,
/// writes pay for the prediction step).
struct TranslationTrace {
  std::size_t pre_prompt_len = 0;
  std::size_t mid_prompt_len = 0;
  std::vector<TraceEvent> events;
  std::vector<std::size_t> d;
  std::vector<std::uint64_t> flop_log;

  std::size_t source_read() const;
  std::size_t writes() const;
  /// Throws an input error if d decreases, a write precedes every read, or
  /// the logs disagree in length.
  void validate() const;

  friend bool operator==(const TranslationTrace&, const TranslationTrace&) = default;
};

/// Source tokens arriving one at a time.
class SourceStream {
 public:
  explicit SourceStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  std::optional<Token> next() {
    if (pos_ >= tokens_.size()) return std::nullopt;
    return tokens_[pos_++];
  }
  bool exhausted() const { return pos_ >= tokens_.size(); }
  std::size_t consumed() const { return pos_; }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

struct GenerationOptions {
  GenerationMode mode = GenerationMode::kCached;
  BiasMode bias = BiasMode::kModified;
  /// Cached mode only: measure ALiBi distance between arrival indices frozen
  /// at entry time instead of canonical ranks.
  bool stale_positions = false;
  /// Recompute mode only: mask applied to the rebuilt sequence.
  MaskMode recompute_mask = MaskMode::kSimulMask;
  std::size_t max_target_len = 64;
  std::optional<Token> eos = kEosToken;
  bool keep_logits = false;
};

struct GenerationResult {
  std::vector<Token> target;  // excludes a terminating end-of-sequence token
  TranslationTrace trace;
  std::vector<std::vector<float>> step_logits;  // per write, if requested
};

/// Wait-and-write loop: before emitting target t exactly f(t) source tokens
/// have been read (fewer once the stream ends). Greedy argmax decoding.
/// Cached mode ingests every token once through forward_incremental;
/// recompute mode rebuilds the canonical sequence at every write and runs
/// forward_full under the SimulMask of the reads realized so far.
GenerationResult simul_generate(const ModelParams& params, const DecisionPolicy& policy,
                                std::span<const Token> pre_prompt, SourceStream& source,
                                std::span<const Token> mid_prompt,
                                const GenerationOptions& options);

/// Read/write events a policy produces for known lengths, without a model.
TranslationTrace schedule_trace(const DecisionPolicy& policy, std::size_t source_len,
                                std::size_t target_len, std::size_t pre_prompt_len,
                                std::size_t mid_prompt_len);

/// Prefix fine-tuning expansion: pair i (1-based) keeps min(k - 1 + i, |S|)
/// source and min(i, |T|) target tokens; max(|S| - (k - 1), |T|) pairs.
std::vector<SentencePair> prefix_expand(std::span<const Token> source,
                                        std::span<const Token> target, std::size_t k);

/// Per canonical position of `layout`, the positions its query could attend
/// when it was ingested during the traced session; nullopt for positions
/// never ingested (the final target token and any source the session never read).
std::vector<std::optional<std::vector<std::size_t>>> replay_visibility(
    const TranslationTrace& trace, const PromptLayout& layout);

/// JSON lines, one event per line: {"type":..,"payload":..,"flops":..}.
void write_trace_jsonl(std::ostream& out, const TranslationTrace& trace);
/// Inverse of write_trace_jsonl for a stream holding a single trace. Prompt
/// lengths are not part of the event log and must be supplied.
TranslationTrace read_trace_jsonl(std::istream& in, std::size_t pre_prompt_len,
                                  std::size_t mid_prompt_len);

}  // namespace simulmask

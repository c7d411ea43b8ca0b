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

#include "simulmask/engine.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace simulmask {

const char* to_string(GenerationMode mode) {
  return mode == GenerationMode::kCached ? "cached" : "recompute";
}

std::size_t TranslationTrace::source_read() const {
  std::size_t n = 0;
  for (const auto& e : events)
    if (e.type == EventType::kRead) n += e.payload.size();
  return n;
}

std::size_t TranslationTrace::writes() const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [](const TraceEvent& e) { return e.type == EventType::kWrite; }));
}

void TranslationTrace::validate() const {
  require(flop_log.size() == events.size(), ErrorKind::kInput,
          "trace: flop log and event list differ in length");
  std::size_t read = 0;
  std::size_t w = 0;
  for (const auto& e : events) {
    if (e.type == EventType::kRead) {
      require(!e.payload.empty(), ErrorKind::kInput, "trace: empty read event");
      read += e.payload.size();
      continue;
    }
    require(e.payload.size() == 1, ErrorKind::kInput, "trace: write must carry one token");
    require(read >= 1, ErrorKind::kInput, "trace: write before any read");
    require(w < d.size() && d[w] == read, ErrorKind::kInput,
            "trace: d disagrees with the event log");
    ++w;
  }
  require(w == d.size(), ErrorKind::kInput, "trace: d has entries without writes");
}

namespace {

std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<TaggedToken> tagged(std::span<const Token> tokens, Role role, std::size_t first) {
  std::vector<TaggedToken> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back({tokens[i], CacheTag{role, static_cast<std::uint32_t>(first + i)}});
  }
  return out;
}

CacheBias cache_bias_for(const GenerationOptions& options) {
  if (options.stale_positions) return CacheBias::kArrival;
  return options.bias == BiasMode::kModified ? CacheBias::kVisibleRank
                                             : CacheBias::kPresentRank;
}

}  // namespace

GenerationResult simul_generate(const ModelParams& params, const DecisionPolicy& policy,
                                std::span<const Token> pre_prompt, SourceStream& source,
                                std::span<const Token> mid_prompt,
                                const GenerationOptions& options) {
  require(!pre_prompt.empty() && !mid_prompt.empty(), ErrorKind::kInput,
          "simul_generate: prompt regions must be non-empty");
  require(options.max_target_len >= 1, ErrorKind::kConfig,
          "simul_generate: max_target_len must be >= 1");
  const bool cached = options.mode == GenerationMode::kCached;
  const HeadSlopes slopes = alibi_slopes(params.config.n_heads);

  GenerationResult result;
  TranslationTrace& trace = result.trace;
  trace.pre_prompt_len = pre_prompt.size();
  trace.mid_prompt_len = mid_prompt.size();

  FlopCounter counter;
  FlopScope scope(counter);
  std::uint64_t charged = 0;
  auto take_flops = [&] {
    const std::uint64_t delta = counter.total() - charged;
    charged = counter.total();
    return delta;
  };

  KVCache cache(params.config);
  const CacheBias cache_bias = cache_bias_for(options);
  if (cached) forward_incremental(params, cache, tagged(pre_prompt, Role::kPrePrompt, 0),
                                  canonical_causal, cache_bias);

  std::vector<Token> read_tokens;
  std::vector<Token> written;
  for (std::size_t t = 1; t <= options.max_target_len; ++t) {
    const std::size_t wanted = policy.requested_reads(t);
    std::vector<Token> fresh;
    while (read_tokens.size() < wanted) {
      auto tok = source.next();
      if (!tok) break;
      fresh.push_back(*tok);
      read_tokens.push_back(*tok);
    }
    require(!read_tokens.empty(), ErrorKind::kInput, "simul_generate: empty source stream");
    if (!fresh.empty()) {
      if (cached) {
        forward_incremental(params, cache,
                            tagged(fresh, Role::kSource, read_tokens.size() - fresh.size()),
                            canonical_causal, cache_bias);
      }
      trace.events.push_back({EventType::kRead, fresh});
      trace.flop_log.push_back(take_flops());
    }

    std::vector<float> logits;
    if (cached) {
      const Matrix out =
          t == 1 ? forward_incremental(params, cache, tagged(mid_prompt, Role::kMidPrompt, 0),
                                       canonical_causal, cache_bias)
                 : forward_incremental(
                       params, cache,
                       tagged(std::span<const Token>(&written.back(), 1), Role::kTarget, t - 2),
                       canonical_causal, cache_bias);
      const auto last = out.row(out.rows() - 1);
      logits.assign(last.begin(), last.end());
    } else {
      // Canonical sequence as it stands: prompt, reads so far, prompt, writes.
      std::vector<Token> tokens(pre_prompt.begin(), pre_prompt.end());
      tokens.insert(tokens.end(), read_tokens.begin(), read_tokens.end());
      tokens.insert(tokens.end(), mid_prompt.begin(), mid_prompt.end());
      tokens.insert(tokens.end(), written.begin(), written.end());
      const std::size_t n = tokens.size();
      AttentionMaskSpec mask = causal_mask(n);
      if (options.recompute_mask == MaskMode::kSimulMask) {
        // A placeholder row for the token about to be predicted makes the
        // current step a complete layout; it is dropped again below.
        const PromptLayout layout{pre_prompt.size(), read_tokens.size(), mid_prompt.size(), t};
        const AttentionMaskSpec full =
            simul_mask(layout, policy.with_source_len(read_tokens.size()));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, full.visible(i, j));
      }
      const auto biases = head_biases(mask, slopes, options.bias);
      const Matrix out = forward_full<float>(params, tokens, mask, biases);
      const auto last = out.row(n - 1);
      logits.assign(last.begin(), last.end());
    }

    const auto next = static_cast<Token>(argmax(logits));
    trace.events.push_back({EventType::kWrite, {next}});
    trace.flop_log.push_back(take_flops());
    trace.d.push_back(read_tokens.size());
    if (options.keep_logits) result.step_logits.push_back(std::move(logits));
    if (options.eos && next == *options.eos) break;
    written.push_back(next);
  }
  result.target = written;
  return result;
}

TranslationTrace schedule_trace(const DecisionPolicy& policy, std::size_t source_len,
                                std::size_t target_len, std::size_t pre_prompt_len,
                                std::size_t mid_prompt_len) {
  require(source_len >= 1 && target_len >= 1, ErrorKind::kInput,
          "schedule_trace: lengths must be >= 1");
  TranslationTrace trace;
  trace.pre_prompt_len = pre_prompt_len;
  trace.mid_prompt_len = mid_prompt_len;
  std::size_t read = 0;
  for (std::size_t t = 1; t <= target_len; ++t) {
    const std::size_t wanted = std::min(policy.requested_reads(t), source_len);
    if (wanted > read) {
      std::vector<Token> payload(wanted - read);
      for (std::size_t j = 0; j < payload.size(); ++j) payload[j] = static_cast<Token>(read + j);
      trace.events.push_back({EventType::kRead, std::move(payload)});
      trace.flop_log.push_back(0);
      read = wanted;
    }
    trace.events.push_back({EventType::kWrite, {static_cast<Token>(t - 1)}});
    trace.flop_log.push_back(0);
    trace.d.push_back(read);
  }
  return trace;
}

std::vector<SentencePair> prefix_expand(std::span<const Token> source,
                                        std::span<const Token> target, std::size_t k) {
  require(!source.empty() && !target.empty() && k >= 1, ErrorKind::kInput,
          "prefix_expand: needs |S| >= 1, |T| >= 1, k >= 1");
  const std::size_t s = source.size();
  const std::size_t t = target.size();
  const std::size_t count = std::max(s > k - 1 ? s - (k - 1) : 0, t);
  std::vector<SentencePair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 1; i <= count; ++i) {
    const std::size_t src_len = std::min(k - 1 + i, s);
    const std::size_t tgt_len = std::min(i, t);
    pairs.push_back({std::vector<Token>(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(src_len)),
                     std::vector<Token>(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(tgt_len))});
  }
  return pairs;
}

std::vector<std::optional<std::vector<std::size_t>>> replay_visibility(
    const TranslationTrace& trace, const PromptLayout& layout) {
  layout.validate();
  require(trace.pre_prompt_len == layout.pre_prompt_len &&
              trace.mid_prompt_len == layout.mid_prompt_len,
          ErrorKind::kLayout, "replay: prompt lengths disagree with the layout");
  require(trace.source_read() <= layout.source_len, ErrorKind::kLayout,
          "replay: trace read " + std::to_string(trace.source_read()) +
              " source tokens, layout has " + std::to_string(layout.source_len));
  require(trace.writes() == layout.target_len, ErrorKind::kLayout,
          "replay: trace wrote " + std::to_string(trace.writes()) +
              " tokens, layout has " + std::to_string(layout.target_len));

  std::vector<std::optional<std::vector<std::size_t>>> rows(layout.total());
  std::vector<std::size_t> present;  // canonical positions in the cache
  // A newly ingested query sees every present entry that sorts canonically
  // at or before it.
  auto ingest = [&](std::size_t position) {
    present.push_back(position);
    std::vector<std::size_t> visible;
    for (std::size_t p : present)
      if (p <= position) visible.push_back(p);
    std::sort(visible.begin(), visible.end());
    rows[position] = std::move(visible);
  };

  for (std::size_t i = 0; i < layout.pre_prompt_len; ++i) ingest(i);
  std::size_t read = 0;
  std::size_t written = 0;
  for (const auto& e : trace.events) {
    if (e.type == EventType::kRead) {
      for (std::size_t n = 0; n < e.payload.size(); ++n) ingest(layout.source_begin() + read++);
      continue;
    }
    ++written;
    if (written == 1) {
      for (std::size_t m = 0; m < layout.mid_prompt_len; ++m) ingest(layout.mid_begin() + m);
    } else {
      ingest(layout.target_begin() + written - 2);
    }
  }
  return rows;
}

void write_trace_jsonl(std::ostream& out, const TranslationTrace& trace) {
  for (std::size_t e = 0; e < trace.events.size(); ++e) {
    nlohmann::ordered_json line;
    const auto& ev = trace.events[e];
    line["type"] = ev.type == EventType::kRead ? "read" : "write";
    if (ev.type == EventType::kRead) {
      line["payload"] = ev.payload;
    } else {
      line["payload"] = ev.payload.front();
    }
    line["flops"] = e < trace.flop_log.size() ? trace.flop_log[e] : 0;
    out << line.dump() << '\n';
  }
}

TranslationTrace read_trace_jsonl(std::istream& in, std::size_t pre_prompt_len,
                                  std::size_t mid_prompt_len) {
  TranslationTrace trace;
  trace.pre_prompt_len = pre_prompt_len;
  trace.mid_prompt_len = mid_prompt_len;
  std::string line;
  std::size_t read = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "read") {
        auto payload = j.at("payload").get<std::vector<Token>>();
        read += payload.size();
        trace.events.push_back({EventType::kRead, std::move(payload)});
      } else if (type == "write") {
        trace.events.push_back({EventType::kWrite, {j.at("payload").get<Token>()}});
        trace.d.push_back(read);
      } else {
        fail(ErrorKind::kData, "trace: unknown event type '" + type + "'");
      }
      trace.flop_log.push_back(j.at("flops").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, std::string("trace: ") + e.what());
    }
  }
  trace.validate();
  return trace;
}

}  // namespace simulmask

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

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "simulmask/alibi.hpp"
#include "simulmask/corpus.hpp"
#include "simulmask/engine.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/metrics.hpp"
#include "simulmask/training.hpp"
#include "util.hpp"

using namespace simulmask;
using testutil::kind_of;
using testutil::small_config;

namespace {

const std::vector<Token> kPre{kPrePromptToken};
const std::vector<Token> kMid{kMidPromptToken};

GenerationResult run(const ModelParams& p, const DecisionPolicy& policy, std::vector<Token> src,
                     std::size_t max_len, GenerationMode mode = GenerationMode::kCached,
                     bool stale = false) {
  SourceStream stream(std::move(src));
  GenerationOptions o;
  o.mode = mode;
  o.max_target_len = max_len;
  o.eos.reset();
  o.keep_logits = true;
  o.stale_positions = stale;
  return simul_generate(p, policy, kPre, stream, kMid, o);
}

std::vector<Token> random_source(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::vector<Token> s(n);
  for (auto& t : s) t = static_cast<Token>(kFirstContentToken + rng() % (vocab - kFirstContentToken));
  return s;
}

// Pairs enumerated one step at a time: each step adds a target token and a
// source token until either side saturates.
std::vector<std::pair<std::size_t, std::size_t>> enumerate_prefixes(std::size_t s, std::size_t t,
                                                                    std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t src = std::min(k, s), tgt = 1;
  while (true) {
    out.emplace_back(src, tgt);
    if (src == s && tgt == t) break;
    if (src < s) ++src;
    if (tgt < t) ++tgt;
  }
  return out;
}

ModelParams trained_model() {
  auto cfg = small_config(21);
  SyntheticSpec spec;
  spec.sentences = 40;
  spec.vocab = cfg.vocab_size - 3;
  spec.min_len = 4;
  spec.max_len = 8;
  FineTuneOptions o;
  o.epochs = 3;
  o.learning_rate = 0.1;
  o.train_k = 2;
  return fine_tune(init_model(cfg), gen_synthetic(spec), PromptBuilder{}, o).params;
}

}  // namespace

TEST_CASE("simul_generate: k >= S reads everything before writing") {
  const auto p = init_model(small_config(1));
  const auto r = run(p, DecisionPolicy::wait_k(9, 5), {3, 4, 5, 6, 7}, 4);
  REQUIRE(r.trace.events.size() == 5);
  CHECK(r.trace.events[0].type == EventType::kRead);
  CHECK(r.trace.events[0].payload.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(r.trace.events[e].type == EventType::kWrite);
  CHECK(r.trace.d == std::vector<std::size_t>{5, 5, 5, 5});
}

TEST_CASE("simul_generate: wait-k reads one token per write and clips at stream end") {
  const auto p = init_model(small_config(2));
  const auto r = run(p, DecisionPolicy::wait_k(3, 5), {3, 4, 5, 6, 7}, 6);
  CHECK(r.trace.d == std::vector<std::size_t>{3, 4, 5, 5, 5, 5});
  CHECK(r.trace.source_read() == 5);
  CHECK(r.trace.writes() == 6);
  r.trace.validate();
  // A stream shorter than the policy expects: source-finished semantics.
  const auto short_run = run(p, DecisionPolicy::wait_k(4, 9), {3, 4}, 3);
  CHECK(short_run.trace.d == std::vector<std::size_t>{2, 2, 2});
}

TEST_CASE("simul_generate: empty stream and bad options") {
  const auto p = init_model(small_config(3));
  CHECK(kind_of([&] { run(p, DecisionPolicy::wait_k(1, 3), {}, 3); }) == ErrorKind::kInput);
  CHECK(kind_of([&] { run(p, DecisionPolicy::wait_k(1, 3), {3}, 0); }) == ErrorKind::kConfig);
}

TEST_CASE("simul_generate: stops at end of sequence, which is recorded but not returned") {
  auto p = init_model(small_config(4));
  // Force the end-of-sequence logit to dominate.
  for (std::size_t r = 0; r < p.unembedding.rows(); ++r) p.unembedding(r, kEosToken) = 0.0f;
  p.final_bias = Matrix(1, p.config.d_model, 0.0f);
  for (auto& v : p.final_gain.values()) v = 0.0f;
  for (std::size_t c = 0; c < p.unembedding.cols(); ++c)
    if (c != static_cast<std::size_t>(kEosToken))
      for (std::size_t r = 0; r < p.unembedding.rows(); ++r) p.unembedding(r, c) = 0.0f;
  p.final_bias(0, 0) = 1.0f;
  p.unembedding(0, kEosToken) = 5.0f;
  SourceStream stream({3, 4, 5});
  GenerationOptions o;
  const auto r = simul_generate(p, DecisionPolicy::wait_k(1, 3), kPre, stream, kMid, o);
  CHECK(r.target.empty());
  CHECK(r.trace.writes() == 1);
  CHECK(r.trace.events.back().payload.front() == kEosToken);
}

TEST_CASE("simul_generate: wait-1 visibility on the (1,4,1,4) layout matches simul_mask") {
  const auto p = init_model(small_config(5));
  const auto r = run(p, DecisionPolicy::wait_k(1, 4), {3, 4, 5, 6}, 4);
  const PromptLayout l{1, 4, 1, 4};
  const auto replay = replay_visibility(r.trace, l);
  const auto mask = simul_mask(l, DecisionPolicy::wait_k(1, 4));
  for (std::size_t row = 0; row + 1 < l.total(); ++row) {
    REQUIRE(replay[row].has_value());
    std::vector<std::size_t> expect;
    for (auto k : mask.visible_keys(row)) expect.push_back(k);
    CHECK(*replay[row] == expect);
  }
  // Row t1 predicts t2 from p1, s1, s2, p2, t1.
  CHECK(*replay[6] == std::vector<std::size_t>{0, 1, 2, 5, 6});
  CHECK_FALSE(replay[9].has_value());
}

TEST_CASE("replay_visibility: offline traces see the full source; mismatches are errors") {
  const auto trace = schedule_trace(DecisionPolicy::wait_k(6, 6), 6, 3, 1, 1);
  const PromptLayout l{1, 6, 1, 3};
  const auto rows = replay_visibility(trace, l);
  for (std::size_t t = 1; t <= 3; ++t) {
    const auto& v = *rows[l.predictor_row(t)];
    CHECK(std::count_if(v.begin(), v.end(), [&](std::size_t k) { return l.role_at(k) == Role::kSource; }) == 6);
  }
  CHECK(kind_of([&] { replay_visibility(trace, PromptLayout{2, 6, 1, 3}); }) == ErrorKind::kLayout);
  CHECK(kind_of([&] { replay_visibility(trace, PromptLayout{1, 6, 1, 4}); }) == ErrorKind::kLayout);
}

TEST_CASE("simul_generate: cached logits equal forward_full under SimulMask + modified ALiBi") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const auto p = init_model(small_config(100 + trial));
    const std::size_t s = 1 + rng() % 12, t = 1 + rng() % 12, k = 1 + rng() % 7;
    const auto policy = DecisionPolicy::wait_k(k, s);
    const auto r = run(p, policy, random_source(rng, s, 13), t);
    REQUIRE(r.target.size() == t);
    PromptBuilder b;
    b.eos.reset();
    std::vector<Token> src;
    for (const auto& e : r.trace.events)
      if (e.type == EventType::kRead) src.insert(src.end(), e.payload.begin(), e.payload.end());
    const auto built = b.build({src, r.target});
    // Unread source never enters either computation.
    const auto mask = simul_mask(built.layout, policy.with_source_len(src.size()));
    const auto full = forward_full<float>(p, built.tokens, mask,
                                          head_biases(mask, alibi_slopes(4), BiasMode::kModified));
    float worst = 0.0f;
    for (std::size_t i = 1; i <= t; ++i) {
      const auto row = full.row(built.layout.predictor_row(i));
      for (std::size_t c = 0; c < row.size(); ++c)
        worst = std::max(worst, std::abs(row[c] - r.step_logits[i - 1][c]));
    }
    CHECK(worst < 1e-4f);
  }
}

TEST_CASE("simul_generate: cached and recompute agree on a trained model") {
  const auto p = trained_model();
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = 3 + rng() % 6;
    const auto src = random_source(rng, s, 13);
    const auto policy = DecisionPolicy::wait_k(1 + rng() % 3, s);
    const auto a = run(p, policy, src, s, GenerationMode::kCached);
    const auto b = run(p, policy, src, s, GenerationMode::kRecompute);
    CHECK(a.target == b.target);
    CHECK(a.trace.events == b.trace.events);
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.step_logits.size(); ++i)
      for (std::size_t c = 0; c < a.step_logits[i].size(); ++c)
        worst = std::max(worst, std::abs(a.step_logits[i][c] - b.step_logits[i][c]));
    CHECK(worst < 1e-4f);
  }
}

TEST_CASE("simul_generate: stale arrival distances are not equivalent (k = 1)") {
  std::mt19937_64 rng(8);
  std::size_t diverged = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = init_model(small_config(200 + trial));
    const std::size_t s = 12;
    const auto src = random_source(rng, s, 13);
    const auto policy = DecisionPolicy::wait_k(1, s);
    const auto stale = run(p, policy, src, 8, GenerationMode::kCached, true);
    const auto ref = run(p, policy, src, 8, GenerationMode::kRecompute);
    float worst = 0.0f;
    for (std::size_t i = 0; i < std::min(stale.step_logits.size(), ref.step_logits.size()); ++i) {
      for (std::size_t c = 0; c < ref.step_logits[i].size(); ++c)
        worst = std::max(worst, std::abs(stale.step_logits[i][c] - ref.step_logits[i][c]));
      if (stale.target[i] != ref.target[i]) break;
    }
    diverged += worst > 1e-2f;
  }
  CHECK(diverged >= 5);
}

TEST_CASE("simul_generate: logged flops match the analytic model") {
  const auto p = init_model(small_config(9));
  const FlopModel model{p.config};
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = 1 + rng() % 10, t = 1 + rng() % 10;
    const auto policy = DecisionPolicy::wait_k(1 + rng() % 4, s);
    const auto src = random_source(rng, s, 13);
    for (const auto mode : {GenerationMode::kCached, GenerationMode::kRecompute}) {
      const auto r = run(p, policy, src, t, mode);
      const auto measured = std::accumulate(r.trace.flop_log.begin(), r.trace.flop_log.end(), std::uint64_t{0});
      CHECK(measured == flops_generate(r.trace, model, mode).total());
    }
  }
}

TEST_CASE("schedule_trace: agrees with a generated trace's schedule") {
  const auto p = init_model(small_config(10));
  const auto policy = DecisionPolicy::table({2, 2, 4, 5}, 5);
  const auto r = run(p, policy, {3, 4, 5, 6, 7}, 4);
  const auto s = schedule_trace(policy, 5, 4, 1, 1);
  CHECK(s.d == r.trace.d);
  REQUIRE(s.events.size() == r.trace.events.size());
  for (std::size_t e = 0; e < s.events.size(); ++e) {
    CHECK(s.events[e].type == r.trace.events[e].type);
    if (s.events[e].type == EventType::kRead) CHECK(s.events[e].payload.size() == r.trace.events[e].payload.size());
  }
}

TEST_CASE("prefix_expand: counts and shapes vs enumeration") {
  const std::vector<Token> s10{3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, t8{3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(prefix_expand(s10, t8, 3).size() == 8);
  const std::vector<Token> one{5};
  const auto single = prefix_expand(one, one, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].source == one);
  const std::vector<Token> s5{3, 4, 5, 6, 7}, t9{3, 4, 5, 6, 7, 8, 9, 10, 11};
  const auto p = prefix_expand(s5, t9, 3);
  CHECK(p.size() == 9);
  CHECK(p.back().source.size() == 5);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + rng() % 20, t = 1 + rng() % 20, k = 1 + rng() % 8;
    std::vector<Token> src(s), tgt(t);
    std::iota(src.begin(), src.end(), 3);
    std::iota(tgt.begin(), tgt.end(), 30);
    const auto pairs = prefix_expand(src, tgt, k);
    const auto ref = enumerate_prefixes(s, t, k);
    const std::size_t closed = std::max(s >= k - 1 ? s - (k - 1) : 0, t);
    CHECK(pairs.size() == closed);
    CHECK(pairs.size() == ref.size());
    for (std::size_t i = 0; i < std::min(pairs.size(), ref.size()); ++i) {
      CHECK(pairs[i].source.size() == ref[i].first);
      CHECK(pairs[i].target.size() == ref[i].second);
      CHECK(std::equal(pairs[i].source.begin(), pairs[i].source.end(), src.begin()));
    }
    CHECK(pairs.back().source == src);
    CHECK(pairs.back().target == tgt);
  }
}

TEST_CASE("trace jsonl: field order and round trip") {
  const auto p = init_model(small_config(12));
  const auto r = run(p, DecisionPolicy::wait_k(2, 4), {3, 4, 5, 6}, 3);
  std::stringstream io;
  write_trace_jsonl(io, r.trace);
  const std::string text = io.str();
  CHECK(text.rfind("{\"type\":\"read\",\"payload\":[3,4],\"flops\":", 0) == 0);
  const auto back = read_trace_jsonl(io, 1, 1);
  CHECK(back == r.trace);
  std::istringstream bad("{\"type\":\"jump\",\"payload\":1,\"flops\":0}\n");
  CHECK(kind_of([&] { read_trace_jsonl(bad, 1, 1); }) == ErrorKind::kData);
}

TEST_CASE("trace validate: rejects malformed traces") {
  TranslationTrace t;
  t.events = {{EventType::kWrite, {3}}};
  t.d = {0};
  t.flop_log = {0};
  CHECK(kind_of([&] { t.validate(); }) == ErrorKind::kInput);
  t.events = {{EventType::kRead, {3, 4}}, {EventType::kWrite, {3}}, {EventType::kWrite, {4}}};
  t.d = {2, 1};
  t.flop_log = {0, 0, 0};
  CHECK(kind_of([&] { t.validate(); }) == ErrorKind::kInput);
}

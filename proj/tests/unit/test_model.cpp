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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "simulmask/alibi.hpp"
#include "simulmask/corpus.hpp"
#include "simulmask/engine.hpp"
#include "simulmask/kv_cache.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/model.hpp"
#include "simulmask/training.hpp"
#include "util.hpp"

using namespace simulmask;
using testutil::kind_of;
using testutil::max_abs_diff;
using testutil::small_config;

namespace {

std::vector<Token> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::vector<Token> t(n);
  for (auto& v : t) v = static_cast<Token>(rng() % vocab);
  return t;
}

Matrix causal_logits(const ModelParams& p, std::span<const Token> tokens) {
  const auto mask = causal_mask(tokens.size());
  return forward_full<float>(p, tokens, mask,
                             head_biases(mask, alibi_slopes(p.config.n_heads), BiasMode::kStandard));
}

std::vector<TaggedToken> tagged(Role role, std::span<const Token> tokens, std::uint32_t first = 0) {
  std::vector<TaggedToken> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out.push_back({tokens[i], CacheTag{role, first + static_cast<std::uint32_t>(i)}});
  return out;
}

}  // namespace

TEST_CASE("init_model: determinism, seed sensitivity, shapes") {
  const auto cfg = small_config(3);
  CHECK(init_model(cfg) == init_model(cfg));
  CHECK_FALSE(init_model(cfg) == init_model(small_config(4)));

  const auto p = init_model(cfg);
  const std::size_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
  CHECK(p.embedding.rows() == v);
  CHECK(p.embedding.cols() == d);
  CHECK(p.unembedding.rows() == d);
  CHECK(p.unembedding.cols() == v);
  REQUIRE(p.layers.size() == cfg.n_layers);
  for (const auto& l : p.layers) {
    CHECK(l.wq.rows() == d);
    CHECK(l.wo.cols() == d);
    CHECK(l.w1.rows() == d);
    CHECK(l.w1.cols() == f);
    CHECK(l.w2.rows() == f);
    CHECK(l.ln1_gain.cols() == d);
  }
  const std::size_t per_layer = 4 * d * d + 2 * d * f + 4 * d;
  CHECK(p.parameter_count() == 2 * v * d + cfg.n_layers * per_layer + 2 * d);
}

TEST_CASE("init_model: invalid configs") {
  auto c = small_config();
  c.n_heads = 3;
  CHECK(kind_of([&] { init_model(c); }) == ErrorKind::kConfig);
  c = small_config();
  c.n_heads = 32;  // does not divide d_model
  CHECK(kind_of([&] { init_model(c); }) == ErrorKind::kConfig);
  c = small_config();
  c.n_layers = 0;
  CHECK(kind_of([&] { init_model(c); }) == ErrorKind::kConfig);
}

TEST_CASE("forward_full: single token ignores mask and bias choice") {
  const auto p = init_model(small_config(1));
  const std::vector<Token> tok{5};
  const auto m = causal_mask(1);
  const auto a = forward_full<float>(p, tok, m, head_biases(m, alibi_slopes(4), BiasMode::kStandard));
  const auto b = forward_full<float>(p, tok, m, head_biases(m, alibi_slopes(4), BiasMode::kModified));
  CHECK(a == b);
}

TEST_CASE("forward_full: causality and prefix consistency") {
  const auto p = init_model(small_config(2));
  std::mt19937_64 rng(2);
  const auto tokens = random_tokens(rng, 12, 13);
  const auto full = causal_logits(p, tokens);
  auto edited = tokens;
  for (std::size_t i = 7; i < edited.size(); ++i) edited[i] = (edited[i] + 1) % 13;
  const auto other = causal_logits(p, edited);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 13; ++c) CHECK(full(r, c) == other(r, c));
  for (std::size_t n = 1; n <= tokens.size(); ++n) {
    const auto prefix = causal_logits(p, std::span<const Token>(tokens).first(n));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < 13; ++c) CHECK(prefix(r, c) == full(r, c));
  }
}

TEST_CASE("forward_full: shape errors") {
  const auto p = init_model(small_config());
  const std::vector<Token> tok{1, 2, 3};
  const auto m4 = causal_mask(4);
  CHECK(kind_of([&] {
    forward_full<float>(p, tok, m4, head_biases(m4, alibi_slopes(4), BiasMode::kStandard));
  }) == ErrorKind::kShape);
  const auto m3 = causal_mask(3);
  CHECK(kind_of([&] {
    forward_full<float>(p, tok, m3, head_biases(m3, alibi_slopes(2), BiasMode::kStandard));
  }) == ErrorKind::kShape);
  const std::vector<Token> bad{1, 99, 2};
  CHECK(kind_of([&] {
    forward_full<float>(p, bad, m3, head_biases(m3, alibi_slopes(4), BiasMode::kStandard));
  }) == ErrorKind::kInput);
}

TEST_CASE("forward_incremental: base case and one-call causal ingestion are exact") {
  const auto p = init_model(small_config(5));
  std::mt19937_64 rng(5);
  {
    KVCache cache(p.config);
    const std::vector<Token> one{4};
    const auto inc = forward_incremental(p, cache, tagged(Role::kSource, one));
    CHECK(inc == causal_logits(p, one));
    CHECK(cache.size() == 1);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const auto tokens = random_tokens(rng, 2 + rng() % 15, 13);
    KVCache cache(p.config);
    const auto inc = forward_incremental(p, cache, tagged(Role::kSource, tokens));
    CHECK(inc == causal_logits(p, tokens));
  }
}

TEST_CASE("forward_incremental: token-by-token equals one call") {
  const auto p = init_model(small_config(6));
  std::mt19937_64 rng(6);
  const auto tokens = random_tokens(rng, 10, 13);
  KVCache a(p.config), b(p.config);
  const auto all = forward_incremental(p, a, tagged(Role::kSource, tokens));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = forward_incremental(p, b, tagged(Role::kSource, std::span<const Token>(tokens).subspan(i, 1), i));
    for (std::size_t c = 0; c < 13; ++c) CHECK(row(0, c) == all(i, c));
  }
}

TEST_CASE("forward_incremental: interleaved wait-k ingestion matches SimulMask + modified ALiBi") {
  const auto p = init_model(small_config(7));
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const PromptLayout l{1, 2 + rng() % 8, 1, 2 + rng() % 8};
    const auto policy = DecisionPolicy::wait_k(1 + rng() % 4, l.source_len);
    const auto src = random_tokens(rng, l.source_len, 13);
    const auto tgt = random_tokens(rng, l.target_len, 13);
    std::vector<Token> seq{1};
    seq.insert(seq.end(), src.begin(), src.end());
    seq.push_back(2);
    seq.insert(seq.end(), tgt.begin(), tgt.end());
    const auto mask = simul_mask(l, policy);
    const auto full = forward_full<float>(p, seq, mask, head_biases(mask, alibi_slopes(4), BiasMode::kModified));

    KVCache cache(p.config);
    const std::vector<Token> pre{1}, mid{2};
    forward_incremental(p, cache, tagged(Role::kPrePrompt, pre));
    std::size_t read = 0;
    float worst = 0.0f;
    for (std::size_t t = 1; t <= l.target_len; ++t) {
      const std::size_t want = policy.reads_before(t);
      if (want > read) {
        forward_incremental(p, cache,
                            tagged(Role::kSource, std::span<const Token>(src).subspan(read, want - read), read));
        read = want;
      }
      Matrix out;
      if (t == 1) {
        out = forward_incremental(p, cache, tagged(Role::kMidPrompt, mid));
      } else {
        out = forward_incremental(p, cache,
                                  tagged(Role::kTarget, std::span<const Token>(tgt).subspan(t - 2, 1), t - 2));
      }
      const auto row = full.row(l.predictor_row(t));
      for (std::size_t c = 0; c < 13; ++c) worst = std::max(worst, std::abs(out(0, c) - row[c]));
    }
    CHECK(worst < 1e-4f);
  }
}

TEST_CASE("forward_incremental: cache storage order is irrelevant") {
  const auto p = init_model(small_config(8));
  std::mt19937_64 rng(8);
  const auto src = random_tokens(rng, 6, 13);
  KVCache cache(p.config);
  const std::vector<Token> pre{1};
  forward_incremental(p, cache, tagged(Role::kPrePrompt, pre));
  forward_incremental(p, cache, tagged(Role::kSource, src));
  std::vector<std::size_t> order(cache.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto shuffled = cache.permuted(order);
  const std::vector<Token> mid{2};
  const auto a = forward_incremental(p, cache, tagged(Role::kMidPrompt, mid));
  const auto b = forward_incremental(p, shuffled, tagged(Role::kMidPrompt, mid));
  CHECK(a == b);
}

TEST_CASE("forward_incremental: tag order violations") {
  const auto p = init_model(small_config());
  KVCache cache(p.config);
  const std::vector<Token> t{3, 4};
  forward_incremental(p, cache, tagged(Role::kSource, t));
  CHECK(kind_of([&] { forward_incremental(p, cache, tagged(Role::kSource, t, 1)); }) ==
        ErrorKind::kCacheCoherence);
  CHECK(kind_of([&] { forward_incremental(p, cache, tagged(Role::kTarget, t, 1)); }) ==
        ErrorKind::kCacheCoherence);
}

TEST_CASE("cache tags: canonical order is independent of arrival") {
  const CacheTag pre{Role::kPrePrompt, 0}, s0{Role::kSource, 0}, s9{Role::kSource, 9},
      mid{Role::kMidPrompt, 0}, t0{Role::kTarget, 0};
  CHECK(pre < s0);
  CHECK(s0 < s9);
  CHECK(s9 < mid);
  CHECK(mid < t0);
  CHECK(canonical_causal(t0, s9));
  CHECK_FALSE(canonical_causal(s9, t0));
}

TEST_CASE("loss_and_gradient: loss equals mean cross-entropy on predictor rows") {
  const auto cfg = small_config(9);
  const auto p = init_model(cfg);
  const PromptBuilder builder;
  const SentencePair pair{{3, 4, 5, 6, 7}, {8, 9, 10}};
  const auto ex = build_example(pair, builder, cfg, MaskMode::kSimulMask, BiasMode::kModified, 2);
  // Labels: target tokens then the appended end-of-sequence token.
  REQUIRE(ex.targets.size() == 4);
  for (std::size_t t = 1; t <= 4; ++t) {
    CHECK(ex.targets[t - 1].row == ex.layout.predictor_row(t));
    CHECK(ex.targets[t - 1].label == ex.tokens[ex.layout.target_begin() + t - 1]);
  }
  CHECK(ex.targets.back().label == kEosToken);

  const auto logits = forward_full<float>(p, ex.tokens, ex.mask, ex.biases);
  long double total = 0.0L;
  for (const auto& tgt : ex.targets) {
    const auto row = logits.row(tgt.row);
    long double z = 0.0L;
    for (float v : row) z += std::exp(static_cast<long double>(v));
    total += std::log(z) - row[static_cast<std::size_t>(tgt.label)];
  }
  const float loss = loss_and_gradient<float>(p, ex.tokens, ex.mask, ex.biases, ex.targets, nullptr);
  CHECK(loss == doctest::Approx(static_cast<double>(total / ex.targets.size())).epsilon(1e-5));
}

TEST_CASE("loss_and_gradient: matches central finite differences in double") {
  auto cfg = small_config(10);
  const auto p = init_model(cfg).cast<double>();
  const PromptBuilder builder;
  const SentencePair pair{{3, 4, 5, 6, 7, 8}, {9, 10, 11, 12}};
  const auto ex = build_example(pair, builder, cfg, MaskMode::kSimulMask, BiasMode::kModified, 2);
  auto grad = BasicModelParams<double>::zeros(cfg);
  loss_and_gradient<double>(p, ex.tokens, ex.mask, ex.biases, ex.targets, &grad);

  std::mt19937_64 rng(10);
  auto probe = p;
  double worst = 0.0;
  std::size_t checked = 0;
  std::vector<BasicMatrix<double>*> tensors;
  std::vector<const BasicMatrix<double>*> grads;
  probe.for_each_tensor([&](const std::string&, BasicMatrix<double>& m) { tensors.push_back(&m); });
  grad.for_each_tensor([&](const std::string&, const BasicMatrix<double>& m) { grads.push_back(&m); });
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t i = 0; i < tensors[t]->size(); ++i) {
      if (rng() % 20 != 0) continue;
      double& w = tensors[t]->values()[i];
      const double saved = w;
      const double h = 1e-5;
      w = saved + h;
      const double up = loss_and_gradient<double>(probe, ex.tokens, ex.mask, ex.biases, ex.targets, nullptr);
      w = saved - h;
      const double down = loss_and_gradient<double>(probe, ex.tokens, ex.mask, ex.biases, ex.targets, nullptr);
      w = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[t]->values()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
      ++checked;
    }
  }
  CHECK(checked > 50);
  CHECK(worst < 1e-3);
}

TEST_CASE("loss_and_gradient: rows outside the loss region carry no gradient") {
  const auto cfg = small_config(11);
  const auto p = init_model(cfg);
  const PromptBuilder builder;
  const SentencePair pair{{3, 4, 5, 6}, {7, 8, 9}};
  auto ex = build_example(pair, builder, cfg, MaskMode::kSimulMask, BiasMode::kModified, 1);
  auto g1 = ModelParams::zeros(cfg);
  loss_and_gradient<float>(p, ex.tokens, ex.mask, ex.biases, ex.targets, &g1);
  // The final row predicts nothing: changing its embedding row cannot matter
  // unless that token also appears elsewhere.
  const Token last = ex.tokens.back();
  std::size_t uses = std::count(ex.tokens.begin(), ex.tokens.end(), last);
  REQUIRE(uses == 1);
  for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(g1.embedding(static_cast<std::size_t>(last), c) == 0.0f);
}

TEST_CASE("fine_tune: zero learning rate leaves parameters unchanged") {
  const auto cfg = small_config(12);
  SyntheticSpec spec;
  spec.sentences = 6;
  spec.vocab = 10;
  spec.min_len = 3;
  spec.max_len = 6;
  const auto corpus = gen_synthetic(spec);
  FineTuneOptions o;
  o.learning_rate = 0.0;
  o.epochs = 1;
  o.batch_size = 2;
  o.train_k = 2;
  const auto p = init_model(cfg);
  const auto r = fine_tune(p, corpus, PromptBuilder{}, o);
  CHECK(r.params == p);
  CHECK(r.steps == 3);
  CHECK(r.loss_curve.size() == 3);
}

TEST_CASE("fine_tune: one small step lowers the batch loss on copy (5 seeds)") {
  double before = 0.0, after = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cfg = small_config(seed);
    SyntheticSpec spec;
    spec.sentences = 4;
    spec.vocab = 10;
    spec.min_len = 4;
    spec.max_len = 7;
    spec.seed = seed;
    const auto corpus = gen_synthetic(spec);
    FineTuneOptions o;
    o.learning_rate = 0.01;
    o.epochs = 1;
    o.batch_size = 4;
    o.train_k = 2;
    const auto p = init_model(cfg);
    const PromptBuilder b;
    before += evaluate_loss(p, corpus, b, o.mask, o.bias, o.train_k);
    after += evaluate_loss(fine_tune(p, corpus, b, o).params, corpus, b, o.mask, o.bias, o.train_k);
  }
  CHECK(after < before);
}

TEST_CASE("fine_tune: determinism and skipping over-length sentences") {
  const auto cfg = small_config(13);
  SyntheticSpec spec;
  spec.sentences = 8;
  spec.vocab = 10;
  spec.min_len = 2;
  spec.max_len = 8;
  const auto corpus = gen_synthetic(spec);
  FineTuneOptions o;
  o.epochs = 2;
  o.batch_size = 3;
  o.train_k = 1;
  const auto a = fine_tune(init_model(cfg), corpus, PromptBuilder{}, o);
  const auto b = fine_tune(init_model(cfg), corpus, PromptBuilder{}, o);
  CHECK(a.params == b.params);
  o.max_sequence_len = 12;
  const auto c = fine_tune(init_model(cfg), corpus, PromptBuilder{}, o);
  std::size_t too_long = 0;
  for (const auto& pr : corpus) too_long += (pr.source.size() + pr.target.size() + 3 > 12);
  CHECK(c.skipped == too_long);
  o.max_sequence_len = 3;
  CHECK(kind_of([&] { fine_tune(init_model(cfg), corpus, PromptBuilder{}, o); }) == ErrorKind::kData);
}

TEST_CASE("samples_per_epoch: SimulMask vs prefix expansion") {
  const Corpus corpus{{{3, 4, 5, 6, 7}, {3, 4, 5}}, {{3, 4}, {5, 6, 7, 8}}};
  CHECK(samples_per_epoch(corpus, TrainingScheme::kSimulMask, 3) == 2);
  // max(5 - 2, 3) + max(2 - 2, 4)
  CHECK(samples_per_epoch(corpus, TrainingScheme::kPrefix, 3) == 3 + 4);
}

TEST_CASE("checkpoint: round trip and corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "simulmask_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.bin";
  const auto p = init_model(small_config(14));
  save_checkpoint(path, p);
  CHECK(load_checkpoint(path) == p);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 4);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kData);
  {
    std::ofstream junk(path);
    junk << "not json\n";
  }
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kData);
  CHECK(kind_of([&] { load_checkpoint(dir / "missing.bin"); }) == ErrorKind::kIo);
  std::filesystem::remove_all(dir);
}

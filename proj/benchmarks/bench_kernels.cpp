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

#include <benchmark/benchmark.h>

#include <random>

#include "simulmask/alibi.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/model.hpp"
#include "simulmask/tensor.hpp"
#include "simulmask/training.hpp"

using namespace simulmask;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  Matrix m(r, c);
  for (auto& v : m.values()) v = n(rng);
  return m;
}

PromptLayout layout_for(std::size_t n) { return {1, n, 1, n}; }

void BM_MaskedAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto l = layout_for(n);
  const auto mask = simul_mask(l, DecisionPolicy::wait_k(3, n));
  AttentionInputs in{random_matrix(l.total(), 16, 1), random_matrix(l.total(), 16, 2),
                     random_matrix(l.total(), 16, 3), mask.to_additive<float>(),
                     modified_alibi(mask, 0.25f).values};
  for (auto _ : state) benchmark::DoNotOptimize(masked_attention(in));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(l.total()));
}
BENCHMARK(BM_MaskedAttention)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_SimulMask(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto policy = DecisionPolicy::wait_k(3, n);
  for (auto _ : state) benchmark::DoNotOptimize(simul_mask(layout_for(n), policy));
}
BENCHMARK(BM_SimulMask)->RangeMultiplier(2)->Range(8, 128);

void BM_ModifiedAlibiAllHeads(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto mask = simul_mask(layout_for(n), DecisionPolicy::wait_k(3, n));
  const auto slopes = alibi_slopes(4);
  for (auto _ : state) benchmark::DoNotOptimize(head_biases(mask, slopes, BiasMode::kModified));
}
BENCHMARK(BM_ModifiedAlibiAllHeads)->RangeMultiplier(2)->Range(8, 128);

void BM_LossAndGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ModelConfig cfg;
  const auto params = init_model(cfg);
  SentencePair pair;
  for (std::size_t i = 0; i < n; ++i) {
    pair.source.push_back(static_cast<Token>(kFirstContentToken + i % 60));
    pair.target.push_back(static_cast<Token>(kFirstContentToken + (i + 2) % 60));
  }
  const auto ex = build_example(pair, PromptBuilder{}, cfg, MaskMode::kSimulMask, BiasMode::kModified, 3);
  auto grad = ModelParams::zeros(cfg);
  for (auto _ : state)
    benchmark::DoNotOptimize(loss_and_gradient<float>(params, ex.tokens, ex.mask, ex.biases, ex.targets, &grad));
}
BENCHMARK(BM_LossAndGradient)->Arg(8)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();

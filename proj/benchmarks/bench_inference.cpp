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

#include "simulmask/engine.hpp"
#include "simulmask/metrics.hpp"

using namespace simulmask;

namespace {

// Full simultaneous decode of an n-token source at wait-3.
void BM_Generate(benchmark::State& state, GenerationMode mode) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto params = init_model(ModelConfig{});
  std::vector<Token> src;
  for (std::size_t i = 0; i < n; ++i) src.push_back(static_cast<Token>(kFirstContentToken + i % 60));
  GenerationOptions o;
  o.mode = mode;
  o.max_target_len = n;
  o.eos.reset();
  const std::vector<Token> pre{kPrePromptToken}, mid{kMidPromptToken};
  std::uint64_t flops = 0;
  for (auto _ : state) {
    SourceStream stream(src);
    const auto r = simul_generate(params, DecisionPolicy::wait_k(3, n), pre, stream, mid, o);
    flops = flops_generate(r.trace, FlopModel{params.config}, mode).total();
    benchmark::DoNotOptimize(r.target.data());
  }
  state.counters["flops"] = static_cast<double>(flops);
  state.counters["flop_rate"] =
      benchmark::Counter(static_cast<double>(flops), benchmark::Counter::kIsIterationInvariantRate);
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}
BENCHMARK_CAPTURE(BM_Generate, cached, GenerationMode::kCached)
    ->RangeMultiplier(2)->Range(8, 64)->Complexity()->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Generate, recompute, GenerationMode::kRecompute)
    ->RangeMultiplier(2)->Range(8, 64)->Complexity()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

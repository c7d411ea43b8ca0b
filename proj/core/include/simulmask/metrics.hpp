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
#include <span>
#include <vector>

#include "simulmask/engine.hpp"
#include "simulmask/model.hpp"

namespace simulmask {

/// Length-adaptive average lagging, in source tokens:
///   (1 / tau) * sum_{i=1..tau} [ d_i - (i - 1) * |S| / max(|R|, |Y|) ]
/// where tau is the first write issued after the whole source was read
/// (or the last write considered if that never happens). Only the first
/// `target_len` writes are considered.
double laal(const TranslationTrace& trace, std::size_t source_len, std::size_t target_len,
            std::size_t reference_len);

/// Matrix-multiply operation counts for the workbench transformer, counting a
/// multiply-accumulate as two operations. Embedding lookups, softmax,
/// normalization and activations are not counted. Attention is charged only
/// for the keys a query actually attends.
struct FlopModel {
  ModelConfig config;

  /// Projections, feed-forward and output head for one token.
  std::uint64_t linear_per_token() const;
  /// Scores plus weighted sum over `visible` keys, all layers and heads.
  std::uint64_t attention(std::size_t visible) const;
  std::uint64_t token(std::size_t visible) const { return linear_per_token() + attention(visible); }
};

struct FlopBreakdown {
  std::uint64_t initial = 0;
  std::uint64_t recompute = 0;
  std::uint64_t total() const { return initial + recompute; }
};

/// Analytic cost of a traced session. Cached mode computes every ingested
/// token once (all "initial"). Recompute mode re-runs the whole canonical
/// sequence at every write; the cost of a single pass over the final
/// sequence is "initial" and everything beyond it is "recompute".
FlopBreakdown flops_generate(const TranslationTrace& trace, const FlopModel& model,
                             GenerationMode mode,
                             MaskMode recompute_mask = MaskMode::kSimulMask);

struct QualityScores {
  double token_accuracy = 0.0;
  double exact_match = 0.0;
};

/// Token accuracy = position-wise matches / reference tokens; exact match =
/// fraction of identical sequences.
QualityScores quality_proxy(std::span<const std::vector<Token>> hypotheses,
                            std::span<const std::vector<Token>> references);

/// Least-squares slope of log(y) against log(x).
double fit_power_law_exponent(std::span<const double> x, std::span<const double> y);

struct MetricsRow {
  std::size_t sentence_id = 0;
  std::size_t k_or_chunk = 0;
  double laal = 0.0;
  std::uint64_t flops_initial = 0;
  std::uint64_t flops_recompute = 0;
  double token_acc = 0.0;
  double exact_match = 0.0;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace simulmask

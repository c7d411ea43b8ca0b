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

#include "simulmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace simulmask {

double laal(const TranslationTrace& trace, std::size_t source_len, std::size_t target_len,
            std::size_t reference_len) {
  require(!trace.d.empty(), ErrorKind::kInput, "laal: empty trace");
  require(source_len >= 1 && target_len >= 1 && reference_len >= 1, ErrorKind::kInput,
          "laal: lengths must be >= 1");
  const double rate =
      static_cast<double>(source_len) / static_cast<double>(std::max(reference_len, target_len));
  const std::size_t usable = std::min(trace.d.size(), target_len);
  double sum = 0.0;
  std::size_t tau = 0;
  for (std::size_t i = 0; i < usable; ++i) {
    sum += static_cast<double>(trace.d[i]) - static_cast<double>(i) * rate;
    tau = i + 1;
    if (trace.d[i] >= source_len) break;
  }
  return sum / static_cast<double>(tau);
}

std::uint64_t FlopModel::linear_per_token() const {
  const std::uint64_t d = config.d_model;
  const std::uint64_t per_layer = 4 * d * d + 2 * d * config.d_ff;
  return 2 * (config.n_layers * per_layer + d * config.vocab_size);
}

std::uint64_t FlopModel::attention(std::size_t visible) const {
  // 2 * visible * d_head for scores and again for the weighted sum, per head.
  return 4ull * config.n_layers * config.n_heads * config.d_head() * visible;
}

namespace {

/// One pass over the canonical sequence at a step where `reads` source
/// tokens and `targets` target tokens are present. Row visibility follows
/// the SimulMask the trace induces (mid-prompt rows see d_1, the row
/// predicting target t sees d_t), or plain causal visibility.
std::uint64_t pass_cost(const FlopModel& model, const TranslationTrace& trace,
                        std::size_t reads, std::size_t targets, bool causal) {
  const std::size_t p1 = trace.pre_prompt_len;
  const std::size_t p2 = trace.mid_prompt_len;
  std::uint64_t cost = 0;
  std::size_t row = 0;
  auto add = [&](std::size_t visible) {
    cost += model.token(causal ? row + 1 : visible);
    ++row;
  };
  for (std::size_t i = 0; i < p1; ++i) add(i + 1);
  for (std::size_t j = 0; j < reads; ++j) add(p1 + j + 1);
  const std::size_t first = std::min(trace.d.front(), reads);
  for (std::size_t m = 0; m < p2; ++m) add(p1 + first + m + 1);
  for (std::size_t i = 0; i < targets; ++i) add(p1 + std::min(trace.d[i + 1], reads) + p2 + i + 1);
  return cost;
}

}  // namespace

FlopBreakdown flops_generate(const TranslationTrace& trace, const FlopModel& model,
                             GenerationMode mode, MaskMode recompute_mask) {
  trace.validate();
  require(!trace.d.empty(), ErrorKind::kInput, "flops_generate: trace has no writes");
  const std::size_t writes = trace.d.size();
  FlopBreakdown out;
  out.initial = pass_cost(model, trace, trace.source_read(), writes - 1, false);
  if (mode == GenerationMode::kCached) return out;

  std::uint64_t total = 0;
  for (std::size_t t = 1; t <= writes; ++t) {
    total += pass_cost(model, trace, trace.d[t - 1], t - 1,
                       recompute_mask == MaskMode::kCausal);
  }
  require(total >= out.initial, ErrorKind::kInput,
          "flops_generate: recompute cost below a single pass");
  out.recompute = total - out.initial;
  return out;
}

QualityScores quality_proxy(std::span<const std::vector<Token>> hypotheses,
                            std::span<const std::vector<Token>> references) {
  require(hypotheses.size() == references.size(), ErrorKind::kInput,
          "quality_proxy: hypothesis and reference counts differ");
  require(!references.empty(), ErrorKind::kInput, "quality_proxy: no sentences");
  std::size_t matched = 0;
  std::size_t total = 0;
  std::size_t exact = 0;
  for (std::size_t s = 0; s < references.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    total += ref.size();
    for (std::size_t i = 0; i < std::min(hyp.size(), ref.size()); ++i) matched += hyp[i] == ref[i];
    exact += hyp == ref ? 1 : 0;
  }
  QualityScores q;
  q.token_accuracy = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
  q.exact_match = static_cast<double>(exact) / static_cast<double>(references.size());
  return q;
}

double fit_power_law_exponent(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::kInput,
          "fit_power_law_exponent: need at least two paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0 && y[i] > 0, ErrorKind::kInput, "fit_power_law_exponent: values must be > 0");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  require(sxx > 0, ErrorKind::kInput, "fit_power_law_exponent: x values are all equal");
  return sxy / sxx;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "sentence_id,k_or_chunk,laal,flops_initial,flops_recompute,token_acc,exact_match\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    out << r.sentence_id << ',' << r.k_or_chunk << ',' << r.laal << ',' << r.flops_initial << ','
        << r.flops_recompute << ',' << r.token_acc << ',' << r.exact_match << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace simulmask

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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "simulmask/corpus.hpp"
#include "simulmask/engine.hpp"
#include "simulmask/model.hpp"
#include "simulmask/training.hpp"

namespace simulmask {

/// Everything a run needs. `seed` drives model init, synthetic data and the
/// shuffle order; `model.vocab_size` is derived from `data.vocab`.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "simulmask_out";

  SyntheticSpec data;
  std::filesystem::path corpus_path;  // empty: generate synthetic data
  std::filesystem::path checkpoint;   // non-empty: load instead of training

  ModelConfig model;
  FineTuneOptions train;

  std::vector<std::size_t> eval_k{1, 3, 5};
  std::vector<GenerationMode> modes{GenerationMode::kCached};
  std::size_t eval_sentences = 0;  // 0 = whole corpus
  std::size_t target_slack = 4;    // write budget beyond the source length
  bool write_dumps = true;

  void validate() const;
};

/// Applies one `key=value` setting. Unknown keys and malformed values throw a
/// configuration error.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; '#' starts a comment.
ExperimentConfig parse_experiment_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        ExperimentConfig base = {});

/// Canonical text form; parsing it back yields an equal config.
std::string format_experiment_config(const ExperimentConfig& config);

/// Seed-derived fields filled in (model/data/shuffle seeds, vocab size).
ExperimentConfig resolve(const ExperimentConfig& config);

Corpus load_or_generate_corpus(const ExperimentConfig& config);

struct SummaryRow {
  std::size_t eval_k = 0;
  GenerationMode mode = GenerationMode::kCached;
  std::size_t sentences = 0;
  double laal = 0.0;
  double token_acc = 0.0;
  double exact_match = 0.0;
  double flops_initial = 0.0;
  double flops_recompute = 0.0;
};

struct ExperimentReport {
  std::vector<SummaryRow> summary;
  std::vector<std::filesystem::path> files;
  FineTuneResult training;  // steps == 0 when a checkpoint was loaded
};

/// Trains (or loads), sweeps eval-k x mode with simul_generate and writes
/// config.resolved, loss.csv, checkpoint.bin, metrics_<mode>.csv,
/// traces_<mode>.jsonl, masks/ and summary.csv under out_dir. On failure every
/// file written so far is removed and the error is rethrown with context.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Evaluation only, no files: one summary row per (eval-k, mode).
std::vector<SummaryRow> evaluate_sweep(const ModelParams& params, std::span<const SentencePair> corpus,
                                       const ExperimentConfig& config);

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);

GenerationMode parse_generation_mode(const std::string& text);
MaskMode parse_mask_mode(const std::string& text);
BiasMode parse_bias_mode(const std::string& text);
const char* to_string(MaskMode mode);
const char* to_string(BiasMode mode);

}  // namespace simulmask

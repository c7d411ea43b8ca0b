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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simulmask/alibi.hpp"
#include "simulmask/corpus.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/model.hpp"

namespace simulmask {

enum class MaskMode { kCausal, kSimulMask };
enum class OptimizerKind { kSgd, kAdam };

struct FineTuneOptions {
  MaskMode mask = MaskMode::kSimulMask;
  BiasMode bias = BiasMode::kModified;
  std::size_t train_k = 5;
  std::size_t epochs = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  double max_grad_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t shuffle_seed = 0;
  std::size_t max_sequence_len = 512;
};

/// A sentence laid out for training with its mask, per-head biases and
/// supervised rows.
struct TrainingExample {
  std::vector<Token> tokens;
  PromptLayout layout;
  AttentionMaskSpec mask;
  std::vector<PositionalBias> biases;
  std::vector<LossTarget> targets;
};

TrainingExample build_example(const SentencePair& pair, const PromptBuilder& builder,
                              const ModelConfig& config, MaskMode mask, BiasMode bias,
                              std::size_t train_k);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct FineTuneResult {
  ModelParams params;
  std::vector<LossPoint> loss_curve;
  std::size_t steps = 0;
  std::size_t skipped = 0;
};

using ProgressFn = std::function<void(std::size_t epoch, double mean_loss)>;

/// Mini-batch gradient descent on mean cross-entropy over target-predicting
/// rows, with a fresh mask and bias per sentence. Gradients are clipped to
/// max_grad_norm (global L2). Sequences longer than max_sequence_len are
/// skipped with a warning on stderr.
FineTuneResult fine_tune(ModelParams params, std::span<const SentencePair> corpus,
                         const PromptBuilder& builder, const FineTuneOptions& options,
                         const ProgressFn& progress = {});

/// Mean loss over a corpus without updating anything.
double evaluate_loss(const ModelParams& params, std::span<const SentencePair> corpus,
                     const PromptBuilder& builder, MaskMode mask, BiasMode bias,
                     std::size_t train_k);

enum class TrainingScheme { kSimulMask, kPrefix };

/// Training samples per epoch: one per sentence for SimulMask, one per
/// prefix_expand pair for prefix fine-tuning.
std::size_t samples_per_epoch(std::span<const SentencePair> corpus, TrainingScheme scheme,
                              std::size_t k);

}  // namespace simulmask

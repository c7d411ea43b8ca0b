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
#include <span>
#include <string>
#include <vector>

#include "simulmask/alibi.hpp"
#include "simulmask/loss_target.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/policy.hpp"
#include "simulmask/tensor.hpp"

namespace simulmask {

/// Pre-norm decoder-only transformer. Position enters only through ALiBi
/// biases, never through embeddings, keys or values.
struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 64;
  std::uint64_t seed = 0;

  std::size_t d_head() const { return d_model / n_heads; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct BasicLayerParams {
  BasicMatrix<T> ln1_gain, ln1_bias;  // 1 x d
  BasicMatrix<T> wq, wk, wv, wo;      // d x d
  BasicMatrix<T> ln2_gain, ln2_bias;  // 1 x d
  BasicMatrix<T> w1;                  // d x d_ff
  BasicMatrix<T> w2;                  // d_ff x d

  friend bool operator==(const BasicLayerParams&, const BasicLayerParams&) = default;
};

template <typename T>
struct BasicModelParams {
  ModelConfig config;
  BasicMatrix<T> embedding;  // vocab x d
  std::vector<BasicLayerParams<T>> layers;
  BasicMatrix<T> final_gain, final_bias;  // 1 x d
  BasicMatrix<T> unembedding;             // d x vocab

  /// All-zero parameters with the shapes implied by `config`.
  static BasicModelParams zeros(const ModelConfig& config);

  /// Visits every tensor in a fixed order: fn(name, matrix).
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(std::string("embedding"), embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& p = layers[l];
      const std::string pre = "layer" + std::to_string(l) + ".";
      fn(pre + "ln1_gain", p.ln1_gain);
      fn(pre + "ln1_bias", p.ln1_bias);
      fn(pre + "wq", p.wq);
      fn(pre + "wk", p.wk);
      fn(pre + "wv", p.wv);
      fn(pre + "wo", p.wo);
      fn(pre + "ln2_gain", p.ln2_gain);
      fn(pre + "ln2_bias", p.ln2_bias);
      fn(pre + "w1", p.w1);
      fn(pre + "w2", p.w2);
    }
    fn(std::string("final_gain"), final_gain);
    fn(std::string("final_bias"), final_bias);
    fn(std::string("unembedding"), unembedding);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<BasicModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, BasicMatrix<T>& m) {
          fn(name, static_cast<const BasicMatrix<T>&>(m));
        });
  }

  std::size_t parameter_count() const;

  template <typename U>
  BasicModelParams<U> cast() const;

  friend bool operator==(const BasicModelParams&, const BasicModelParams&) = default;
};

using ModelParams = BasicModelParams<float>;
using LayerParams = BasicLayerParams<float>;

/// Deterministic initialization from config.seed.
ModelParams init_model(const ModelConfig& config);

/// Logits (L x vocab) for every position. `head_bias` holds one bias per
/// head over the same visibility as `mask`.
template <typename T>
BasicMatrix<T> forward_full(const BasicModelParams<T>& params, std::span<const Token> tokens,
                            const AttentionMaskSpec& mask,
                            std::span<const PositionalBias> head_bias);

/// Mean cross-entropy over `targets`. When `grad` is non-null, adds
/// `weight` times the gradient of that mean into it.
template <typename T>
T loss_and_gradient(const BasicModelParams<T>& params, std::span<const Token> tokens,
                    const AttentionMaskSpec& mask,
                    std::span<const PositionalBias> head_bias,
                    std::span<const LossTarget> targets, BasicModelParams<T>* grad,
                    T weight = T(1));

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line (config and tensor offsets, counted in
// values) followed by every tensor as 32-bit little-endian floats.

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace simulmask

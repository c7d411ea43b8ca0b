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

#include "simulmask/training.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "simulmask/engine.hpp"

namespace simulmask {

TrainingExample build_example(const SentencePair& pair, const PromptBuilder& builder,
                              const ModelConfig& config, MaskMode mask, BiasMode bias,
                              std::size_t train_k) {
  auto built = builder.build(pair);
  TrainingExample ex;
  ex.layout = built.layout;
  ex.targets = PromptBuilder::loss_targets(built);
  ex.mask = mask == MaskMode::kSimulMask
                ? simul_mask(built.layout, DecisionPolicy::wait_k(train_k, built.layout.source_len))
                : causal_mask(built.layout.total());
  ex.biases = head_biases(ex.mask, alibi_slopes(config.n_heads), bias);
  ex.tokens = std::move(built.tokens);
  return ex;
}

namespace {

class Optimizer {
 public:
  Optimizer(const FineTuneOptions& options, const ModelConfig& config)
      : options_(options) {
    if (options.optimizer == OptimizerKind::kAdam) {
      m_ = ModelParams::zeros(config);
      v_ = ModelParams::zeros(config);
    }
  }

  void step(ModelParams& params, ModelParams& grad) {
    double norm2 = 0.0;
    grad.for_each_tensor([&](const std::string&, const Matrix& g) {
      for (float v : g.values()) norm2 += double(v) * double(v);
    });
    const double norm = std::sqrt(norm2);
    const double clip =
        norm > options_.max_grad_norm && norm > 0.0 ? options_.max_grad_norm / norm : 1.0;
    const auto lr = static_cast<float>(options_.learning_rate);

    std::vector<Matrix*> g_tensors;
    grad.for_each_tensor([&](const std::string&, Matrix& g) { g_tensors.push_back(&g); });
    if (options_.optimizer == OptimizerKind::kSgd) {
      std::size_t i = 0;
      params.for_each_tensor([&](const std::string&, Matrix& p) {
        const auto& g = g_tensors[i++]->values();
        for (std::size_t e = 0; e < p.size(); ++e) {
          p.values()[e] -= lr * static_cast<float>(clip) * g[e];
        }
      });
      return;
    }
    ++t_;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::vector<Matrix*> ms, vs;
    m_.for_each_tensor([&](const std::string&, Matrix& m) { ms.push_back(&m); });
    v_.for_each_tensor([&](const std::string&, Matrix& v) { vs.push_back(&v); });
    std::size_t i = 0;
    params.for_each_tensor([&](const std::string&, Matrix& p) {
      auto& g = g_tensors[i]->values();
      auto& m = ms[i]->values();
      auto& v = vs[i]->values();
      ++i;
      for (std::size_t e = 0; e < p.size(); ++e) {
        const double ge = double(g[e]) * clip;
        m[e] = static_cast<float>(kBeta1 * m[e] + (1.0 - kBeta1) * ge);
        v[e] = static_cast<float>(kBeta2 * v[e] + (1.0 - kBeta2) * ge * ge);
        const double update = (m[e] / c1) / (std::sqrt(v[e] / c2) + kEps);
        p.values()[e] -= static_cast<float>(options_.learning_rate * update);
      }
    });
  }

 private:
  FineTuneOptions options_;
  ModelParams m_, v_;
  std::size_t t_ = 0;
};

void zero(ModelParams& grad) {
  grad.for_each_tensor([](const std::string&, Matrix& m) {
    std::fill(m.values().begin(), m.values().end(), 0.0f);
  });
}

}  // namespace

FineTuneResult fine_tune(ModelParams params, std::span<const SentencePair> corpus,
                         const PromptBuilder& builder, const FineTuneOptions& options,
                         const ProgressFn& progress) {
  require(!corpus.empty(), ErrorKind::kData, "fine_tune: empty corpus");
  require(options.batch_size >= 1, ErrorKind::kConfig, "fine_tune: batch size must be >= 1");
  require(options.train_k >= 1, ErrorKind::kConfig, "fine_tune: train k must be >= 1");
  require(options.learning_rate >= 0.0, ErrorKind::kConfig,
          "fine_tune: learning rate must be >= 0");
  const ModelConfig config = params.config;

  std::vector<TrainingExample> examples;
  examples.reserve(corpus.size());
  FineTuneResult result;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const std::size_t length = builder.pre_prompt.size() + corpus[s].source.size() +
                               builder.mid_prompt.size() + corpus[s].target.size() +
                               (builder.eos ? 1 : 0);
    if (length > options.max_sequence_len) {
      std::cerr << "[warn] fine_tune: skipping sentence " << s << " (length " << length
                << " > " << options.max_sequence_len << ")\n";
      ++result.skipped;
      continue;
    }
    examples.push_back(
        build_example(corpus[s], builder, config, options.mask, options.bias, options.train_k));
  }
  require(!examples.empty(), ErrorKind::kData, "fine_tune: every sentence was skipped");

  Optimizer optimizer(options, config);
  ModelParams grad = ModelParams::zeros(config);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.shuffle_seed);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      const auto weight = 1.0f / static_cast<float>(end - begin);
      zero(grad);
      double batch_loss = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const auto& ex = examples[order[b]];
        batch_loss += loss_and_gradient<float>(params, ex.tokens, ex.mask, ex.biases,
                                               ex.targets, &grad, weight);
      }
      batch_loss /= static_cast<double>(end - begin);
      require(std::isfinite(batch_loss), ErrorKind::kDegenerate,
              "fine_tune: loss diverged at step " + std::to_string(result.steps));
      epoch_loss += batch_loss * static_cast<double>(end - begin);
      optimizer.step(params, grad);
      result.loss_curve.push_back({result.steps, batch_loss});
      ++result.steps;
    }
    if (progress) progress(epoch, epoch_loss / static_cast<double>(order.size()));
  }
  result.params = std::move(params);
  return result;
}

double evaluate_loss(const ModelParams& params, std::span<const SentencePair> corpus,
                     const PromptBuilder& builder, MaskMode mask, BiasMode bias,
                     std::size_t train_k) {
  require(!corpus.empty(), ErrorKind::kData, "evaluate_loss: empty corpus");
  double total = 0.0;
  for (const auto& pair : corpus) {
    const auto ex = build_example(pair, builder, params.config, mask, bias, train_k);
    total += loss_and_gradient<float>(params, ex.tokens, ex.mask, ex.biases, ex.targets,
                                      nullptr);
  }
  return total / static_cast<double>(corpus.size());
}

std::size_t samples_per_epoch(std::span<const SentencePair> corpus, TrainingScheme scheme,
                              std::size_t k) {
  if (scheme == TrainingScheme::kSimulMask) return corpus.size();
  std::size_t n = 0;
  for (const auto& pair : corpus) n += prefix_expand(pair.source, pair.target, k).size();
  return n;
}

}  // namespace simulmask

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

#include "simulmask/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "model_ops.hpp"

namespace simulmask {

void ModelConfig::validate() const {
  require(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ff >= 1 && vocab_size >= 1,
          ErrorKind::kConfig, "model config: all counts must be >= 1");
  require(d_model % n_heads == 0, ErrorKind::kConfig,
          "model config: d_model must be divisible by n_heads");
  require((n_heads & (n_heads - 1)) == 0, ErrorKind::kConfig,
          "model config: n_heads must be a power of two");
}

template <typename T>
BasicModelParams<T> BasicModelParams<T>::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  BasicModelParams<T> p;
  p.config = config;
  p.embedding = BasicMatrix<T>(config.vocab_size, d);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.ln1_gain = BasicMatrix<T>(1, d);
    layer.ln1_bias = BasicMatrix<T>(1, d);
    layer.wq = BasicMatrix<T>(d, d);
    layer.wk = BasicMatrix<T>(d, d);
    layer.wv = BasicMatrix<T>(d, d);
    layer.wo = BasicMatrix<T>(d, d);
    layer.ln2_gain = BasicMatrix<T>(1, d);
    layer.ln2_bias = BasicMatrix<T>(1, d);
    layer.w1 = BasicMatrix<T>(d, config.d_ff);
    layer.w2 = BasicMatrix<T>(config.d_ff, d);
  }
  p.final_gain = BasicMatrix<T>(1, d);
  p.final_bias = BasicMatrix<T>(1, d);
  p.unembedding = BasicMatrix<T>(d, config.vocab_size);
  return p;
}

template <typename T>
std::size_t BasicModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const BasicMatrix<T>& m) { n += m.size(); });
  return n;
}

template <typename T>
template <typename U>
BasicModelParams<U> BasicModelParams<T>::cast() const {
  BasicModelParams<U> out = BasicModelParams<U>::zeros(config);
  std::vector<const BasicMatrix<T>*> src;
  for_each_tensor([&](const std::string&, const BasicMatrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.for_each_tensor([&](const std::string&, BasicMatrix<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

ModelParams init_model(const ModelConfig& config) {
  ModelParams p = ModelParams::zeros(config);
  std::mt19937_64 rng(config.seed);
  auto fill_normal = [&](Matrix& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (float& v : m.values()) v = static_cast<float>(dist(rng));
  };
  const double d = static_cast<double>(config.d_model);
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  fill_normal(p.embedding, 1.0);
  for (auto& layer : p.layers) {
    std::fill(layer.ln1_gain.values().begin(), layer.ln1_gain.values().end(), 1.0f);
    std::fill(layer.ln2_gain.values().begin(), layer.ln2_gain.values().end(), 1.0f);
    fill_normal(layer.wq, 1.0 / std::sqrt(d));
    fill_normal(layer.wk, 1.0 / std::sqrt(d));
    fill_normal(layer.wv, 1.0 / std::sqrt(d));
    fill_normal(layer.wo, residual_scale / std::sqrt(d));
    fill_normal(layer.w1, 1.0 / std::sqrt(d));
    fill_normal(layer.w2, residual_scale / std::sqrt(static_cast<double>(config.d_ff)));
  }
  std::fill(p.final_gain.values().begin(), p.final_gain.values().end(), 1.0f);
  fill_normal(p.unembedding, 1.0 / std::sqrt(d));
  return p;
}

namespace {

/// Sparse row-wise view of a self-attention mask with per-head biases.
template <typename T>
struct Pattern {
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> keys;
  std::vector<std::vector<T>> bias;  // [head][entry]

  std::span<const std::uint32_t> row_keys(std::size_t i) const {
    return {keys.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::span<const T> row_bias(std::size_t h, std::size_t i) const {
    return {bias[h].data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

template <typename T>
Pattern<T> build_pattern(const AttentionMaskSpec& mask,
                         std::span<const PositionalBias> head_bias, std::size_t length,
                         std::size_t n_heads) {
  require(mask.rows() == length, ErrorKind::kShape,
          "forward: mask size " + std::to_string(mask.rows()) + " != token count " +
              std::to_string(length));
  mask.validate_self_attention();
  require(head_bias.size() == n_heads, ErrorKind::kShape,
          "forward: expected one positional bias per head");
  for (const auto& b : head_bias) {
    require(b.values.rows() == length && b.values.cols() == length, ErrorKind::kShape,
            "forward: bias size does not match token count");
  }
  Pattern<T> p;
  p.offsets.reserve(length + 1);
  p.offsets.push_back(0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (mask.visible(i, j)) p.keys.push_back(static_cast<std::uint32_t>(j));
    }
    p.offsets.push_back(p.keys.size());
  }
  p.bias.assign(n_heads, std::vector<T>(p.keys.size()));
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t e = p.offsets[i]; e < p.offsets[i + 1]; ++e) {
        p.bias[h][e] = static_cast<T>(head_bias[h].values(i, p.keys[e]));
      }
    }
  }
  return p;
}

template <typename T>
struct LayerActs {
  BasicMatrix<T> in, xhat1, ln1, q, k, v, ctx, mid, xhat2, ln2, pre, act;
  std::vector<T> rstd1, rstd2;
  std::vector<std::vector<T>> probs;  // [head][entry]
};

template <typename T>
struct Acts {
  std::vector<LayerActs<T>> layers;
  BasicMatrix<T> out, xhatf, lnf;
  std::vector<T> rstdf;
};

template <typename T>
void layer_norm_rows(const BasicMatrix<T>& x, const BasicMatrix<T>& gain,
                     const BasicMatrix<T>& bias, BasicMatrix<T>& out,
                     BasicMatrix<T>& xhat, std::vector<T>& rstd) {
  const std::size_t d = x.cols();
  out = BasicMatrix<T>(x.rows(), d);
  xhat = BasicMatrix<T>(x.rows(), d);
  rstd.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    rstd[i] = ops::layer_norm_row(x.row(i).data(), gain.data(), bias.data(),
                                  out.row(i).data(), xhat.row(i).data(), d);
  }
}

template <typename T>
void check_tokens(std::span<const Token> tokens, std::size_t vocab) {
  require(!tokens.empty(), ErrorKind::kInput, "forward: empty token sequence");
  for (Token t : tokens) {
    require(t >= 0 && static_cast<std::size_t>(t) < vocab, ErrorKind::kInput,
            "forward: token id " + std::to_string(t) + " outside vocabulary");
  }
}

template <typename T>
void run_forward(const BasicModelParams<T>& params, std::span<const Token> tokens,
                 const Pattern<T>& pattern, Acts<T>& acts) {
  const ModelConfig& cfg = params.config;
  const std::size_t L = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const T scale = T(1) / std::sqrt(T(dh));

  BasicMatrix<T> x(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    auto src = params.embedding.row(static_cast<std::size_t>(tokens[i]));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  acts.layers.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& p = params.layers[l];
    auto& a = acts.layers[l];
    a.in = x;
    layer_norm_rows(a.in, p.ln1_gain, p.ln1_bias, a.ln1, a.xhat1, a.rstd1);
    a.q = BasicMatrix<T>(L, d);
    a.k = BasicMatrix<T>(L, d);
    a.v = BasicMatrix<T>(L, d);
    kernel::gemm(a.ln1.data(), p.wq.data(), a.q.data(), L, d, d);
    kernel::gemm(a.ln1.data(), p.wk.data(), a.k.data(), L, d, d);
    kernel::gemm(a.ln1.data(), p.wv.data(), a.v.data(), L, d, d);
    a.ctx = BasicMatrix<T>(L, d);
    a.probs.assign(cfg.n_heads, std::vector<T>(pattern.keys.size()));
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        const auto keys = pattern.row_keys(i);
        kernel::attend_row<T>(std::span<const T>(a.q.row(i).data() + off, dh),
                              a.k.data() + off, a.v.data() + off, d, keys,
                              pattern.row_bias(h, i), scale,
                              std::span<T>(a.probs[h].data() + pattern.offsets[i], keys.size()),
                              std::span<T>(a.ctx.row(i).data() + off, dh));
      }
    }
    a.mid = BasicMatrix<T>(L, d);
    kernel::gemm(a.ctx.data(), p.wo.data(), a.mid.data(), L, d, d);
    for (std::size_t e = 0; e < a.mid.size(); ++e) a.mid.data()[e] += a.in.data()[e];

    layer_norm_rows(a.mid, p.ln2_gain, p.ln2_bias, a.ln2, a.xhat2, a.rstd2);
    a.pre = BasicMatrix<T>(L, cfg.d_ff);
    kernel::gemm(a.ln2.data(), p.w1.data(), a.pre.data(), L, d, cfg.d_ff);
    a.act = BasicMatrix<T>(L, cfg.d_ff);
    for (std::size_t e = 0; e < a.pre.size(); ++e) a.act.data()[e] = ops::gelu(a.pre.data()[e]);
    x = BasicMatrix<T>(L, d);
    kernel::gemm(a.act.data(), p.w2.data(), x.data(), L, cfg.d_ff, d);
    for (std::size_t e = 0; e < x.size(); ++e) x.data()[e] += a.mid.data()[e];
  }
  acts.out = std::move(x);
  layer_norm_rows(acts.out, params.final_gain, params.final_bias, acts.lnf, acts.xhatf,
                  acts.rstdf);
}

template <typename T>
void run_backward(const BasicModelParams<T>& params, const Pattern<T>& pattern,
                  std::span<const Token> tokens, const Acts<T>& acts,
                  BasicMatrix<T> dlnf, BasicModelParams<T>& grad) {
  const ModelConfig& cfg = params.config;
  const std::size_t L = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const std::size_t F = cfg.d_ff;
  const T scale = T(1) / std::sqrt(T(dh));

  BasicMatrix<T> dx(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    ops::layer_norm_row_backward(dlnf.row(i).data(), acts.xhatf.row(i).data(),
                                 acts.rstdf[i], params.final_gain.data(),
                                 dx.row(i).data(), grad.final_gain.data(),
                                 grad.final_bias.data(), d);
  }

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const auto& p = params.layers[l];
    const auto& a = acts.layers[l];
    auto& g = grad.layers[l];

    // Feed-forward block.
    BasicMatrix<T> dmid = dx;
    kernel::gemm_tn_acc(a.act.data(), dx.data(), g.w2.data(), L, F, d);
    BasicMatrix<T> dpre(L, F);
    kernel::gemm_nt(dx.data(), p.w2.data(), dpre.data(), L, d, F);
    for (std::size_t e = 0; e < dpre.size(); ++e) dpre.data()[e] *= ops::gelu_grad(a.pre.data()[e]);
    kernel::gemm_tn_acc(a.ln2.data(), dpre.data(), g.w1.data(), L, d, F);
    BasicMatrix<T> dln2(L, d);
    kernel::gemm_nt(dpre.data(), p.w1.data(), dln2.data(), L, F, d);
    for (std::size_t i = 0; i < L; ++i) {
      ops::layer_norm_row_backward(dln2.row(i).data(), a.xhat2.row(i).data(), a.rstd2[i],
                                   p.ln2_gain.data(), dmid.row(i).data(), g.ln2_gain.data(),
                                   g.ln2_bias.data(), d);
    }

    // Attention block.
    BasicMatrix<T> din = dmid;
    kernel::gemm_tn_acc(a.ctx.data(), dmid.data(), g.wo.data(), L, d, d);
    BasicMatrix<T> dctx(L, d);
    kernel::gemm_nt(dmid.data(), p.wo.data(), dctx.data(), L, d, d);
    BasicMatrix<T> dq(L, d), dk(L, d), dv(L, d);
    std::vector<T> dp;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        const auto keys = pattern.row_keys(i);
        const T* probs = a.probs[h].data() + pattern.offsets[i];
        const T* dc = dctx.row(i).data() + off;
        dp.assign(keys.size(), T(0));
        T weighted = T(0);
        for (std::size_t n = 0; n < keys.size(); ++n) {
          const T* vrow = a.v.row(keys[n]).data() + off;
          T* dvrow = dv.row(keys[n]).data() + off;
          T acc = T(0);
          for (std::size_t c = 0; c < dh; ++c) {
            acc += dc[c] * vrow[c];
            dvrow[c] += probs[n] * dc[c];
          }
          dp[n] = acc;
          weighted += probs[n] * acc;
        }
        const T* qrow = a.q.row(i).data() + off;
        T* dqrow = dq.row(i).data() + off;
        for (std::size_t n = 0; n < keys.size(); ++n) {
          const T ds = probs[n] * (dp[n] - weighted) * scale;
          const T* krow = a.k.row(keys[n]).data() + off;
          T* dkrow = dk.row(keys[n]).data() + off;
          for (std::size_t c = 0; c < dh; ++c) {
            dqrow[c] += ds * krow[c];
            dkrow[c] += ds * qrow[c];
          }
        }
      }
    }
    kernel::gemm_tn_acc(a.ln1.data(), dq.data(), g.wq.data(), L, d, d);
    kernel::gemm_tn_acc(a.ln1.data(), dk.data(), g.wk.data(), L, d, d);
    kernel::gemm_tn_acc(a.ln1.data(), dv.data(), g.wv.data(), L, d, d);
    BasicMatrix<T> dln1(L, d);
    kernel::gemm_nt(dq.data(), p.wq.data(), dln1.data(), L, d, d);
    kernel::gemm_nt(dk.data(), p.wk.data(), dln1.data(), L, d, d, true);
    kernel::gemm_nt(dv.data(), p.wv.data(), dln1.data(), L, d, d, true);
    for (std::size_t i = 0; i < L; ++i) {
      ops::layer_norm_row_backward(dln1.row(i).data(), a.xhat1.row(i).data(), a.rstd1[i],
                                   p.ln1_gain.data(), din.row(i).data(), g.ln1_gain.data(),
                                   g.ln1_bias.data(), d);
    }
    dx = std::move(din);
  }

  for (std::size_t i = 0; i < L; ++i) {
    auto dst = grad.embedding.row(static_cast<std::size_t>(tokens[i]));
    auto src = dx.row(i);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
}

}  // namespace

template <typename T>
BasicMatrix<T> forward_full(const BasicModelParams<T>& params, std::span<const Token> tokens,
                            const AttentionMaskSpec& mask,
                            std::span<const PositionalBias> head_bias) {
  check_tokens<T>(tokens, params.config.vocab_size);
  const auto pattern = build_pattern<T>(mask, head_bias, tokens.size(), params.config.n_heads);
  Acts<T> acts;
  run_forward(params, tokens, pattern, acts);
  BasicMatrix<T> logits(tokens.size(), params.config.vocab_size);
  kernel::gemm(acts.lnf.data(), params.unembedding.data(), logits.data(), tokens.size(),
               params.config.d_model, params.config.vocab_size);
  return logits;
}

template <typename T>
T loss_and_gradient(const BasicModelParams<T>& params, std::span<const Token> tokens,
                    const AttentionMaskSpec& mask,
                    std::span<const PositionalBias> head_bias,
                    std::span<const LossTarget> targets, BasicModelParams<T>* grad,
                    T weight) {
  const ModelConfig& cfg = params.config;
  check_tokens<T>(tokens, cfg.vocab_size);
  require(!targets.empty(), ErrorKind::kInput, "loss: no supervised rows");
  const auto pattern = build_pattern<T>(mask, head_bias, tokens.size(), cfg.n_heads);
  Acts<T> acts;
  run_forward(params, tokens, pattern, acts);

  const std::size_t n = targets.size();
  const std::size_t d = cfg.d_model;
  const std::size_t V = cfg.vocab_size;
  BasicMatrix<T> h(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    require(targets[r].row < tokens.size(), ErrorKind::kInput, "loss: row out of range");
    require(targets[r].label >= 0 && static_cast<std::size_t>(targets[r].label) < V,
            ErrorKind::kInput, "loss: label outside vocabulary");
    auto src = acts.lnf.row(targets[r].row);
    std::copy(src.begin(), src.end(), h.row(r).begin());
  }
  BasicMatrix<T> logits(n, V);
  kernel::gemm(h.data(), params.unembedding.data(), logits.data(), n, d, V);

  T loss = T(0);
  BasicMatrix<T> dlogits(n, V);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = logits.row(r);
    const T max_value = *std::max_element(row.begin(), row.end());
    T sum = T(0);
    for (std::size_t c = 0; c < V; ++c) sum += std::exp(row[c] - max_value);
    const T log_z = max_value + std::log(sum);
    const auto label = static_cast<std::size_t>(targets[r].label);
    loss -= row[label] - log_z;
    for (std::size_t c = 0; c < V; ++c) {
      dlogits(r, c) = std::exp(row[c] - log_z) * weight / T(n);
    }
    dlogits(r, label) -= weight / T(n);
  }
  loss /= T(n);
  if (grad == nullptr) return loss;

  require(grad->config == cfg, ErrorKind::kShape, "loss: gradient shape mismatch");
  kernel::gemm_tn_acc(h.data(), dlogits.data(), grad->unembedding.data(), n, d, V);
  BasicMatrix<T> dh(n, d);
  kernel::gemm_nt(dlogits.data(), params.unembedding.data(), dh.data(), n, V, d);
  BasicMatrix<T> dlnf(tokens.size(), d);
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = dlnf.row(targets[r].row);
    auto src = dh.row(r);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  run_backward(params, pattern, tokens, acts, std::move(dlnf), *grad);
  return loss;
}

template struct BasicModelParams<float>;
template struct BasicModelParams<double>;
template BasicModelParams<double> BasicModelParams<float>::cast<double>() const;
template BasicModelParams<float> BasicModelParams<double>::cast<float>() const;
template BasicModelParams<float> BasicModelParams<float>::cast<float>() const;
template BasicMatrix<float> forward_full(const BasicModelParams<float>&, std::span<const Token>,
                                         const AttentionMaskSpec&,
                                         std::span<const PositionalBias>);
template BasicMatrix<double> forward_full(const BasicModelParams<double>&,
                                          std::span<const Token>, const AttentionMaskSpec&,
                                          std::span<const PositionalBias>);
template float loss_and_gradient(const BasicModelParams<float>&, std::span<const Token>,
                                 const AttentionMaskSpec&, std::span<const PositionalBias>,
                                 std::span<const LossTarget>, BasicModelParams<float>*, float);
template double loss_and_gradient(const BasicModelParams<double>&, std::span<const Token>,
                                  const AttentionMaskSpec&, std::span<const PositionalBias>,
                                  std::span<const LossTarget>, BasicModelParams<double>*,
                                  double);

}  // namespace simulmask

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

#include "simulmask/kv_cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_ops.hpp"

namespace simulmask {

KVCache::KVCache(const ModelConfig& config)
    : d_model_(config.d_model), keys_(config.n_layers), values_(config.n_layers) {}

KVCache KVCache::permuted(std::span<const std::size_t> order) const {
  require(order.size() == size(), ErrorKind::kInput, "permuted: order has wrong length");
  std::vector<bool> seen(size(), false);
  for (std::size_t i : order) {
    require(i < size() && !seen[i], ErrorKind::kInput, "permuted: not a permutation");
    seen[i] = true;
  }
  KVCache out = *this;
  for (std::size_t n = 0; n < order.size(); ++n) {
    out.tags_[n] = tags_[order[n]];
    out.arrivals_[n] = arrivals_[order[n]];
    for (std::size_t l = 0; l < keys_.size(); ++l) {
      std::copy_n(keys_[l].data() + order[n] * d_model_, d_model_,
                  out.keys_[l].data() + n * d_model_);
      std::copy_n(values_[l].data() + order[n] * d_model_, d_model_,
                  out.values_[l].data() + n * d_model_);
    }
  }
  return out;
}

void KVCache::check_extends(const CacheTag& tag) const {
  const auto role = static_cast<std::size_t>(tag.role);
  require(tag.index == next_index_[role], ErrorKind::kCacheCoherence,
          std::string("cache: expected ") + to_string(tag.role) + " index " +
              std::to_string(next_index_[role]) + ", got " + std::to_string(tag.index));
}

std::size_t KVCache::begin_entry(const CacheTag& tag) {
  check_extends(tag);
  ++next_index_[static_cast<std::size_t>(tag.role)];
  tags_.push_back(tag);
  arrivals_.push_back(next_arrival_++);
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    keys_[l].resize(keys_[l].size() + d_model_);
    values_[l].resize(values_[l].size() + d_model_);
  }
  return tags_.size() - 1;
}

void KVCache::store(std::size_t layer, std::size_t entry, std::span<const float> key,
                    std::span<const float> value) {
  std::copy(key.begin(), key.end(), keys_[layer].data() + entry * d_model_);
  std::copy(value.begin(), value.end(), values_[layer].data() + entry * d_model_);
}

bool canonical_causal(const CacheTag& query, const CacheTag& key) { return key <= query; }

Matrix forward_incremental(const ModelParams& params, KVCache& cache,
                           std::span<const TaggedToken> new_tokens,
                           const Attendable& attendable, CacheBias bias) {
  const ModelConfig& cfg = params.config;
  require(cache.n_layers() == cfg.n_layers && cache.d_model() == cfg.d_model,
          ErrorKind::kCacheCoherence, "cache was built for a different model");
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const std::size_t F = cfg.d_ff;
  const std::size_t V = cfg.vocab_size;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const HeadSlopes slopes = alibi_slopes(cfg.n_heads);

  Matrix logits(new_tokens.size(), V);
  std::vector<float> x(d), ln(d), q(d), k(d), v(d), ctx(d), mid(d), pre(F), act(F), out(d);
  std::vector<std::uint32_t> visible;
  std::vector<float> distance;
  std::vector<float> head_bias;
  std::vector<float> probs;

  for (std::size_t n = 0; n < new_tokens.size(); ++n) {
    const TaggedToken& tok = new_tokens[n];
    require(tok.token >= 0 && static_cast<std::size_t>(tok.token) < V, ErrorKind::kInput,
            "forward_incremental: token outside vocabulary");
    cache.check_extends(tok.tag);
    const std::uint64_t query_arrival = cache.next_arrival();
    const std::size_t self = cache.begin_entry(tok.tag);

    // Visible entries in canonical order, the query itself included.
    visible.clear();
    for (std::size_t e = 0; e < self; ++e) {
      if (attendable(tok.tag, cache.tags()[e])) visible.push_back(static_cast<std::uint32_t>(e));
    }
    visible.push_back(static_cast<std::uint32_t>(self));
    const auto& tags = cache.tags();
    std::sort(visible.begin(), visible.end(),
              [&](std::uint32_t a, std::uint32_t b) { return tags[a] < tags[b]; });

    distance.assign(visible.size(), 0.0f);
    if (bias == CacheBias::kVisibleRank) {
      const auto self_pos = static_cast<std::ptrdiff_t>(
          std::find(visible.begin(), visible.end(), self) - visible.begin());
      for (std::size_t r = 0; r < visible.size(); ++r) {
        distance[r] = static_cast<float>(std::abs(self_pos - static_cast<std::ptrdiff_t>(r)));
      }
    } else if (bias == CacheBias::kPresentRank) {
      for (std::size_t r = 0; r < visible.size(); ++r) {
        const CacheTag& lo = std::min(tags[visible[r]], tok.tag);
        const CacheTag& hi = std::max(tags[visible[r]], tok.tag);
        std::size_t between = 0;
        for (const CacheTag& t : tags) between += (lo < t && t <= hi) ? 1 : 0;
        distance[r] = static_cast<float>(between);
      }
    } else {
      for (std::size_t r = 0; r < visible.size(); ++r) {
        const auto key_arrival = static_cast<std::int64_t>(cache.arrivals()[visible[r]]);
        distance[r] = static_cast<float>(
            std::llabs(static_cast<std::int64_t>(query_arrival) - key_arrival));
      }
    }

    auto emb = params.embedding.row(static_cast<std::size_t>(tok.token));
    std::copy(emb.begin(), emb.end(), x.begin());
    probs.resize(visible.size());
    head_bias.resize(visible.size());
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const LayerParams& p = params.layers[l];
      ops::layer_norm_row(x.data(), p.ln1_gain.data(), p.ln1_bias.data(), ln.data(),
                          static_cast<float*>(nullptr), d);
      kernel::gemm(ln.data(), p.wq.data(), q.data(), 1, d, d);
      kernel::gemm(ln.data(), p.wk.data(), k.data(), 1, d, d);
      kernel::gemm(ln.data(), p.wv.data(), v.data(), 1, d, d);
      cache.store(l, self, k, v);
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const std::size_t off = h * dh;
        const float slope = slopes.slopes[h];
        for (std::size_t r = 0; r < visible.size(); ++r) head_bias[r] = 0.0f - slope * distance[r];
        kernel::attend_row<float>(std::span<const float>(q.data() + off, dh),
                                  cache.keys_data(l) + off, cache.values_data(l) + off, d,
                                  visible, head_bias, scale, probs,
                                  std::span<float>(ctx.data() + off, dh));
      }
      kernel::gemm(ctx.data(), p.wo.data(), mid.data(), 1, d, d);
      for (std::size_t c = 0; c < d; ++c) mid[c] += x[c];
      ops::layer_norm_row(mid.data(), p.ln2_gain.data(), p.ln2_bias.data(), ln.data(),
                          static_cast<float*>(nullptr), d);
      kernel::gemm(ln.data(), p.w1.data(), pre.data(), 1, d, F);
      for (std::size_t c = 0; c < F; ++c) act[c] = ops::gelu(pre[c]);
      kernel::gemm(act.data(), p.w2.data(), x.data(), 1, F, d);
      for (std::size_t c = 0; c < d; ++c) x[c] += mid[c];
    }
    ops::layer_norm_row(x.data(), params.final_gain.data(), params.final_bias.data(),
                        out.data(), static_cast<float*>(nullptr), d);
    kernel::gemm(out.data(), params.unembedding.data(), logits.row(n).data(), 1, d, V);
  }
  return logits;
}

}  // namespace simulmask

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

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "simulmask/model.hpp"

namespace simulmask {

/// Canonical slot of a cached token: role region first, then index within
/// the region. Canonical order is independent of arrival order, so a source
/// token read after the mid-prompt still sorts before it.
struct CacheTag {
  Role role = Role::kPrePrompt;
  std::uint32_t index = 0;

  friend auto operator<=>(const CacheTag&, const CacheTag&) = default;
};

struct TaggedToken {
  Token token = 0;
  CacheTag tag;
};

/// Per-layer keys and values of already-ingested tokens. Entries carry no
/// positional information; ALiBi is applied at query time from the tags.
class KVCache {
 public:
  KVCache() = default;
  explicit KVCache(const ModelConfig& config);

  std::size_t size() const { return tags_.size(); }
  bool empty() const { return tags_.empty(); }
  std::size_t n_layers() const { return keys_.size(); }
  std::size_t d_model() const { return d_model_; }

  const std::vector<CacheTag>& tags() const { return tags_; }
  /// Arrival index of each entry (0 for the first token ever ingested).
  const std::vector<std::uint64_t>& arrivals() const { return arrivals_; }
  std::uint64_t next_arrival() const { return next_arrival_; }

  std::span<const float> key(std::size_t layer, std::size_t entry) const {
    return {keys_[layer].data() + entry * d_model_, d_model_};
  }
  std::span<const float> value(std::size_t layer, std::size_t entry) const {
    return {values_[layer].data() + entry * d_model_, d_model_};
  }
  const float* keys_data(std::size_t layer) const { return keys_[layer].data(); }
  const float* values_data(std::size_t layer) const { return values_[layer].data(); }

  /// Copy with entries stored in `order` (a permutation of 0..size-1).
  KVCache permuted(std::span<const std::size_t> order) const;

  /// Throws a cache-coherence error unless `tag` is the next free slot of
  /// its role.
  void check_extends(const CacheTag& tag) const;

  /// Reserves a new entry and returns its storage index.
  std::size_t begin_entry(const CacheTag& tag);
  void store(std::size_t layer, std::size_t entry, std::span<const float> key,
             std::span<const float> value);

 private:
  std::size_t d_model_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::vector<CacheTag> tags_;
  std::vector<std::uint64_t> arrivals_;
  std::uint64_t next_arrival_ = 0;
  std::array<std::uint32_t, 4> next_index_{};
};

/// Which distance the ALiBi bias of a cached key is measured in.
enum class CacheBias {
  /// Rank distance among the keys visible to the query (modified ALiBi).
  kVisibleRank,
  /// Rank distance among every present entry in canonical order, i.e.
  /// standard ALiBi over the canonical sequence rebuilt so far.
  kPresentRank,
  /// Distance between arrival indices frozen at entry time (stale).
  kArrival,
};

using Attendable = std::function<bool(const CacheTag& query, const CacheTag& key)>;

/// key <= query in canonical order.
bool canonical_causal(const CacheTag& query, const CacheTag& key);

/// Ingests `new_tokens` in order. Each token attends the cache entries its
/// predicate admits (including earlier tokens of this call) and itself,
/// ordered canonically; its keys and values are then appended. Returns one
/// logits row per new token.
Matrix forward_incremental(const ModelParams& params, KVCache& cache,
                           std::span<const TaggedToken> new_tokens,
                           const Attendable& attendable = canonical_causal,
                           CacheBias bias = CacheBias::kVisibleRank);

}  // namespace simulmask
